#pragma once

#include "tdntc/datapipe/csv.hpp"
#include "tdntc/datapipe/dataset.hpp"
#include "tdntc/datapipe/preprocess.hpp"
