#pragma once

#include "invo/nn/batchnorm.hpp"
#include "invo/nn/common.hpp"
#include "invo/nn/conv.hpp"
#include "invo/nn/involution.hpp"
#include "invo/nn/linear.hpp"
#include "invo/nn/pooling.hpp"
