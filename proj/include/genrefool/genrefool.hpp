#pragma once

#include "genrefool/corpus.hpp"
#include "genrefool/embeddings.hpp"
#include "genrefool/error.hpp"
#include "genrefool/external_victim.hpp"
#include "genrefool/fooler.hpp"
#include "genrefool/harness.hpp"
#include "genrefool/keyword_attack.hpp"
#include "genrefool/metrics.hpp"
#include "genrefool/rng.hpp"
#include "genrefool/stopwords.hpp"
#include "genrefool/synthetic.hpp"
#include "genrefool/text.hpp"
#include "genrefool/victim.hpp"
