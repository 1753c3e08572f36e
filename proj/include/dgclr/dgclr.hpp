#pragma once

#include "dgclr/autodiff.hpp"
#include "dgclr/checkpoint.hpp"
#include "dgclr/config.hpp"
#include "dgclr/data.hpp"
#include "dgclr/dcl.hpp"
#include "dgclr/dgl.hpp"
#include "dgclr/error.hpp"
#include "dgclr/evalx.hpp"
#include "dgclr/graph.hpp"
#include "dgclr/interact.hpp"
#include "dgclr/io.hpp"
#include "dgclr/model.hpp"
#include "dgclr/params.hpp"
#include "dgclr/synthetic.hpp"
#include "dgclr/tensor.hpp"
#include "dgclr/trainer.hpp"
#include "dgclr/whiten.hpp"
