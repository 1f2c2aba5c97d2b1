#pragma once

#include "qpae/baselines.hpp"
#include "qpae/checkpoint.hpp"
#include "qpae/classifier.hpp"
#include "qpae/dataset.hpp"
#include "qpae/error.hpp"
#include "qpae/experiment.hpp"
#include "qpae/matrix.hpp"
#include "qpae/metrics.hpp"
#include "qpae/report.hpp"
#include "qpae/rng.hpp"
#include "qpae/spectrogram.hpp"
#include "qpae/synth.hpp"
#include "qpae/train.hpp"
#include "qpae/unlearn_qp.hpp"
#include "qpae/wav.hpp"
