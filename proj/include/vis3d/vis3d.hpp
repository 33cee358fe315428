#pragma once

#include "vis3d/geometry.hpp"
#include "vis3d/ekf.hpp"
#include "vis3d/semantic_filter.hpp"
#include "vis3d/association.hpp"
#include "vis3d/io.hpp"
#include "vis3d/pipeline.hpp"
#include "vis3d/simulator.hpp"
#include "vis3d/evaluation.hpp"
#include "vis3d/plot.hpp"
