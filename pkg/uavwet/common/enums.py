from enum import Enum, auto


class Variant(Enum):
    MAGRL = "magrl"
    MAGRL_HOE = "magrl-hoe"        # HoE-free reward
    MAGRL_G = "magrl-g"            # no global training, eps = 1
    MAGRL_HOE_G = "magrl-hoe-g"    # both removed

    @property
    def uses_hoe(self) -> bool:
        return self in (Variant.MAGRL, Variant.MAGRL_G)

    @property
    def uses_global(self) -> bool:
        return self in (Variant.MAGRL, Variant.MAGRL_HOE)


class ActMode(Enum):
    STOCHASTIC = auto()
    DETERMINISTIC = auto()


class Penalty(Enum):
    DISTANCE = 0   # PEN^0: inter-UAV safe distance
    AREA = 1       # PEN^1: horizontal area bounds
