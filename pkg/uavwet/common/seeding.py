import numpy as np

# fixed ids so a stream keeps its draws when new streams are added
STREAM_IDS = {
    "env": 11,
    "init": 23,
    "policy-noise": 37,
    "replay": 41,
}


def substream(root_seed: int, name: str, *extra: int) -> np.random.Generator:
    """Independent generator for one named consumer of the root seed.

    Extra integers (episode index, agent index) key further sub-streams so that
    two ablation variants sharing a root seed also share environment draws.
    """
    if name not in STREAM_IDS:
        raise KeyError(f"unknown random stream {name!r}")
    seq = np.random.SeedSequence([int(root_seed), STREAM_IDS[name], *[int(e) for e in extra]])
    return np.random.default_rng(seq)
