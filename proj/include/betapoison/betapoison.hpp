#pragma once

#include "betapoison/attack.hpp"
#include "betapoison/clustering.hpp"
#include "betapoison/dataset.hpp"
#include "betapoison/defenses.hpp"
#include "betapoison/error.hpp"
#include "betapoison/experiment.hpp"
#include "betapoison/kde.hpp"
#include "betapoison/loaders.hpp"
#include "betapoison/metrics.hpp"
#include "betapoison/neighbors.hpp"
#include "betapoison/pca.hpp"
#include "betapoison/report_io.hpp"
#include "betapoison/seed.hpp"
#include "betapoison/svg.hpp"
