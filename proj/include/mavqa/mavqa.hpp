#pragma once

// Umbrella header. The HTTP transport definition (http_transport.hpp) is
// intentionally excluded; include it where a real backend is constructed.

#include "mavqa/config.hpp"
#include "mavqa/ensemble.hpp"
#include "mavqa/errors.hpp"
#include "mavqa/eval.hpp"
#include "mavqa/llm_gateway.hpp"
#include "mavqa/model_config.hpp"
#include "mavqa/prompts.hpp"
#include "mavqa/qa_model.hpp"
#include "mavqa/reply_parse.hpp"
#include "mavqa/runner.hpp"
#include "mavqa/stage1.hpp"
#include "mavqa/stage2.hpp"
#include "mavqa/store.hpp"
#include "mavqa/toolbox.hpp"
#include "mavqa/util.hpp"
