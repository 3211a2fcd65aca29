#pragma once

#include "simmemda/core.hpp"
#include "simmemda/spectral.hpp"
#include "simmemda/simfilter.hpp"
#include "simmemda/membank.hpp"
#include "simmemda/mixer.hpp"
#include "simmemda/eval.hpp"
#include "simmemda/synth.hpp"
#include "simmemda/config.hpp"
#include "simmemda/io.hpp"
