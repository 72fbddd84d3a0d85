#pragma once

#include "noma/channel.hpp"
#include "noma/cnn/layers.hpp"
#include "noma/cnn/model.hpp"
#include "noma/cnn/tensor.hpp"
#include "noma/cnn/train.hpp"
#include "noma/dataset.hpp"
#include "noma/evalbench.hpp"
#include "noma/precoding.hpp"
#include "noma/rng.hpp"
#include "noma/socp.hpp"
