# SPDX-License-Identifier: Apache-2.0
import json

from ._core import (
    group_advantages,
    kl_penalty,
    omega_closed_form,
    omega_minflow_oracle,
    relative_change,
    sample_with_oracle,
    softmax,
    softmax_weight_gradient,
    train_json,
    validate_config,
    verify,
    weights_from_duals,
)

__all__ = [
    "train",
    "group_advantages",
    "kl_penalty",
    "omega_closed_form",
    "omega_minflow_oracle",
    "relative_change",
    "sample_with_oracle",
    "softmax",
    "softmax_weight_gradient",
    "validate_config",
    "verify",
    "weights_from_duals",
]


def train(config, seed=0):
    """Run one training job. `config` is a dict or a path to a JSON file.

    Returns (records, aborted, reason) with one dict per step.
    """
    if isinstance(config, dict):
        text = json.dumps(config)
    else:
        with open(config) as f:
            text = f.read()
    lines, aborted, reason = train_json(text, seed)
    return [json.loads(line) for line in lines], aborted, reason

