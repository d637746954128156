"""Embedded configs for the two worked examples (feedback and cascade)."""
import json

from .model import load_config

CASE1 = {
    "name": "case1",
    "topology": "feedback",
    "systems": [
        {
            "states": ["x1"],
            "manifold": "x1",
            "mode_pos": ["-4*x1 - 3*x1^2 + 2*x2"],
            "mode_neg": ["-4*x1 + 3*x1^2 + 2*x2"],
        },
        {
            "states": ["x2"],
            "manifold": "x2",
            "mode_pos": ["-8*x2 - 3*x2^2 + 3*x1"],
            "mode_neg": ["-8*x2 + 3*x2^2 + 3*x1"],
        },
    ],
    "region": {"x1": [-2, 2], "x2": [-2, 2]},
}

CASE2 = {
    "name": "case2",
    "topology": "cascade",
    "systems": [
        {
            "states": ["x1"],
            "manifold": "x1",
            "mode_pos": ["-4*x1 - 9*x1^2"],
            "mode_neg": ["-4*x1 + 9*x1^2"],
        },
        {
            "states": ["x2"],
            "manifold": "x2",
            "mode_pos": ["-8*x2 - 3*x2^2 + 4*x1"],
            "mode_neg": ["-8*x2 + 3*x2^2 + 4*x1"],
        },
    ],
    "region": {"x1": [-2, 2], "x2": [-2, 2]},
}

CASES = {"case1": CASE1, "case2": CASE2}


def case_text(name):
    return json.dumps(CASES[name], indent=2)


def load_case(name):
    if name not in CASES:
        raise KeyError(f"unknown case {name!r}; expected one of {sorted(CASES)}")
    return load_config(case_text(name))
