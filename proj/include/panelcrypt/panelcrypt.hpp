#pragma once

#include "panelcrypt/core/csv.hpp"
#include "panelcrypt/core/date.hpp"
#include "panelcrypt/core/error.hpp"
#include "panelcrypt/core/linalg.hpp"
#include "panelcrypt/core/series.hpp"
#include "panelcrypt/decentralization.hpp"
#include "panelcrypt/diagnostics.hpp"
#include "panelcrypt/estimators.hpp"
#include "panelcrypt/panel_store.hpp"
#include "panelcrypt/pipeline/config.hpp"
#include "panelcrypt/pipeline/design.hpp"
#include "panelcrypt/pipeline/figures.hpp"
#include "panelcrypt/pipeline/report.hpp"
#include "panelcrypt/pipeline/simulate.hpp"
#include "panelcrypt/quantreg.hpp"
#include "panelcrypt/riskmetrics.hpp"
