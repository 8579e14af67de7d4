#ifndef MGP_MGP_HPP
#define MGP_MGP_HPP

#include "mgp/common.hpp"
#include "mgp/eval.hpp"
#include "mgp/experiment.hpp"
#include "mgp/io.hpp"
#include "mgp/kernels.hpp"
#include "mgp/likelihood.hpp"
#include "mgp/linalg.hpp"
#include "mgp/mcmc.hpp"
#include "mgp/ncut.hpp"
#include "mgp/partition.hpp"
#include "mgp/synth.hpp"

#endif
