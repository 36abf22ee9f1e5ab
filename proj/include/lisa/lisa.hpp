#pragma once

#include "lisa/agent.hpp"
#include "lisa/build.hpp"
#include "lisa/env.hpp"
#include "lisa/model.hpp"
#include "lisa/parser.hpp"
#include "lisa/pctl.hpp"
#include "lisa/prism.hpp"
#include "lisa/reasoner.hpp"
#include "lisa/rtv.hpp"
#include "lisa/semantics.hpp"
