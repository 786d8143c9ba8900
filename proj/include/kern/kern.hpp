#pragma once

#include "kern/checkpoint.hpp"
#include "kern/dataset.hpp"
#include "kern/error.hpp"
#include "kern/gru.hpp"
#include "kern/io.hpp"
#include "kern/knowledge.hpp"
#include "kern/metrics.hpp"
#include "kern/object_router.hpp"
#include "kern/relation_router.hpp"
#include "kern/rng.hpp"
#include "kern/synth.hpp"
#include "kern/tensor.hpp"
#include "kern/trainer.hpp"
