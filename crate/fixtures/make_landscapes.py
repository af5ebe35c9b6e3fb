"""Regenerates the landscape tables in this directory.

Scores are additive per decision so the per-level gradient points at the
optimum. Keys follow the candidate key format of the core crate.
"""
import json
import pathlib

HERE = pathlib.Path(__file__).parent

BACKBONES = {
    "discriminative": ["resnet", "gated_mlp", "pathway_masked"],
    "generative": ["conditional_vae", "flow_matching"],
}
GRID = [
    "hp(lr=0.0003,reg=0.1,dropout=0)",
    "hp(lr=0.0003,reg=10,dropout=0.1)",
    "hp(lr=0.003,reg=0.01,dropout=0)",
    "hp(lr=0.003,reg=1,dropout=0.2)",
]


def leaves():
    for paradigm, bbs in BACKBONES.items():
        for bb in bbs:
            for hp in [None] + list(range(4)):
                for huber in (False, True):
                    parts = [paradigm, bb] + ([GRID[hp]] if hp is not None else []) + (["huber"] if huber else [])
                    yield "/".join(parts), paradigm, bb, hp, huber


def table(score, jitter=0.0):
    return {key: {"mean": round(score(*rest), 6), "jitter_bound": jitter} for key, *rest in leaves()}


def optimum(paradigm, bb, hp, huber):
    s = 0.20
    s += {"discriminative": 0.30, "generative": 0.0}[paradigm]
    s += {"resnet": 0.15, "gated_mlp": 0.0, "pathway_masked": 0.02, "conditional_vae": 0.06, "flow_matching": 0.04}[bb]
    s += {None: 0.0, 0: 0.04, 1: 0.02, 2: 0.06, 3: 0.30}[hp]
    s -= 0.05 if huber else 0.0
    return s


def ablation(paradigm, bb, hp, huber):
    # A wide plateau around the default resnet configuration; the optimum
    # needs a non-default backbone plus two refinements.
    s = 0.30
    if paradigm == "generative":
        s = 0.25 + (0.03 if bb == "flow_matching" else 0.0)
    elif bb == "resnet":
        s += 0.12 + {None: 0.0, 0: 0.02, 1: 0.01, 2: 0.03, 3: 0.02}[hp] + (0.01 if huber else 0.0)
    elif bb == "gated_mlp":
        s += 0.05 + {None: 0.0, 0: 0.01, 1: 0.0, 2: 0.02, 3: 0.01}[hp]
    else:
        s += 0.14 + {None: 0.0, 0: 0.02, 1: 0.10, 2: 0.03, 3: 0.01}[hp] + (0.12 if huber and hp == 1 else 0.0)
    return s


def dump(name, obj):
    (HERE / name).write_text(json.dumps(obj, indent=2) + "\n")


dump("landscape_unique.json", table(optimum))
dump("landscape_jitter.json", table(optimum, jitter=0.02))
dump("landscape_ablation.json", table(ablation))
