"""Hungry-level-of-energy counters and the episode objective H_total."""
from typing import Iterable, Sequence

from uavwet.common.state import HoeState


def initial_hoe(levels: Sequence[float], b_thr: float, horizon: int) -> HoeState:
    # H_i[0] = 1 below threshold, the declared floor of a hungry device
    h = tuple(0 if b >= b_thr else 1 for b in levels)
    return HoeState(h=h, e_exp=b_thr / horizon, satisfied=tuple(b >= b_thr for b in levels))


def hoe_step(h_prev: int, e_har_prev: float, b_now: float, e_exp: float, b_thr: float) -> int:
    if h_prev < 0:
        raise ValueError(f"HoE must be non-negative, got {h_prev}")
    if b_now >= b_thr:
        return 0
    if e_har_prev >= e_exp:
        return max(h_prev - 1, 1)
    return h_prev + 1


def advance(state: HoeState, e_hars: Sequence[float], b_now: Sequence[float], b_thr: float) -> HoeState:
    h = tuple(hoe_step(hp, e, b, state.e_exp, b_thr) for hp, e, b in zip(state.h, e_hars, b_now))
    return HoeState(h=h, e_exp=state.e_exp, satisfied=tuple(b >= b_thr for b in b_now))


def unsatisfied_set(batteries: Sequence[float], e_hars: Sequence[float], b_thr: float) -> frozenset[int]:
    if len(batteries) != len(e_hars):
        raise ValueError(f"{len(batteries)} batteries but {len(e_hars)} harvest values")
    return frozenset(i for i, (b, e) in enumerate(zip(batteries, e_hars)) if b + e < b_thr)


def h_total(hoe_history: Iterable[Sequence[int]], final_unsatisfied: Iterable[int]) -> int:
    """Sum over the finally-unsatisfied devices of their HoE across all slots."""
    final = set(final_unsatisfied)
    if not final:
        return 0
    return int(sum(row[i] for row in hoe_history for i in final))
