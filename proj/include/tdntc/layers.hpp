#pragma once

#include "tdntc/layers/batchnorm.hpp"
#include "tdntc/layers/conv2d.hpp"
#include "tdntc/layers/dense.hpp"
#include "tdntc/layers/layer.hpp"
#include "tdntc/layers/lstm.hpp"
#include "tdntc/layers/maxpool.hpp"
#include "tdntc/layers/reshape.hpp"
#include "tdntc/layers/softmax.hpp"
#include "tdntc/layers/time_distributed.hpp"
