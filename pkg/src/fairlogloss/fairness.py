"""Group-fairness criteria expressed as gamma-membership rules."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ZeroGroupRate
from .model_core import ConstraintSide, GroupRates


class CriterionKind(str, enum.Enum):
    DEMOGRAPHIC_PARITY = "dp"
    EQUALIZED_OPPORTUNITY = "eopp"
    EQUALIZED_ODDS = "eodds"

    @classmethod
    def parse(cls, value):
        """Accept an enum member, its value, or None/'none' for the unconstrained model."""
        if value is None or isinstance(value, cls):
            return value
        if str(value).lower() in ("none", "lr", "baseline"):
            return None
        return cls(str(value).lower())

    @property
    def label_dependent(self):
        return self is not CriterionKind.DEMOGRAPHIC_PARITY


@dataclass(frozen=True)
class Constraint:
    """One scalar equality constraint; ``label`` restricts it to rows with y == label."""

    constraint_id: str
    label: int | None

    def side(self, a, y):
        if self.label is not None and y != self.label:
            return ConstraintSide.NEITHER
        return ConstraintSide.GAMMA1 if a == 1 else ConstraintSide.GAMMA0

    def sides(self, a, y):
        a = np.asarray(a)
        y = np.asarray(y)
        out = np.where(a == 1, ConstraintSide.GAMMA1, ConstraintSide.GAMMA0).astype(np.int8)
        if self.label is not None:
            out[y != self.label] = ConstraintSide.NEITHER
        return out


_CONSTRAINTS = {
    CriterionKind.DEMOGRAPHIC_PARITY: (Constraint("dp", None),),
    CriterionKind.EQUALIZED_OPPORTUNITY: (Constraint("y1", 1),),
    CriterionKind.EQUALIZED_ODDS: (Constraint("y1", 1), Constraint("y0", 0)),
}


def constraints_for(kind):
    if kind is None:
        return ()
    return _CONSTRAINTS[CriterionKind.parse(kind)]


def _lookup(kind, constraint_id):
    cons = constraints_for(kind)
    if isinstance(constraint_id, (int, np.integer)) and not isinstance(constraint_id, bool):
        if 0 <= constraint_id < len(cons):
            return cons[constraint_id]
    else:
        for c in cons:
            if c.constraint_id == constraint_id:
                return c
    raise KeyError(f"invalid constraint id {constraint_id!r} for {kind}")


def membership(kind, constraint_id, a, y) -> ConstraintSide:
    """Side of (a, y) under one constraint of ``kind``.

    ``constraint_id`` is either the positional index or the string id
    ('dp'; 'y1'; 'y1' and 'y0').
    """
    return _lookup(CriterionKind.parse(kind), constraint_id).side(int(a), int(y))


@dataclass(frozen=True)
class FairnessSpec:
    kind: CriterionKind | None
    constraints: tuple
    rates: tuple

    @property
    def n_constraints(self):
        return len(self.constraints)

    def side_matrix(self, a, y):
        """(n_constraints, n) array of sides."""
        if not self.constraints:
            return np.empty((0, len(a)), dtype=np.int8)
        return np.vstack([c.sides(a, y) for c in self.constraints])

    def example_params(self, lambdas, a, y):
        """Per-example (side, lam, p1, p0) arrays.

        Constraint partitions are disjoint, so each row takes its parameters
        from the single constraint that touches it (if any).
        """
        n = len(a)
        side = np.full(n, ConstraintSide.NEITHER, dtype=np.int8)
        lam = np.zeros(n)
        p1 = np.ones(n)
        p0 = np.ones(n)
        for c, r, l in zip(self.constraints, self.rates, lambdas):
            s = c.sides(a, y)
            hit = s != ConstraintSide.NEITHER
            side[hit] = s[hit]
            lam[hit] = l
            p1[hit] = r.p_gamma1
            p0[hit] = r.p_gamma0
        return side, lam, p1, p0


def empirical_rates(dataset, kind) -> FairnessSpec:
    """Count gamma_1/gamma_0 frequencies of every constraint over the sample."""
    kind = CriterionKind.parse(kind)
    a = np.asarray(dataset.a)
    y = np.asarray(dataset.y)
    n = len(a)
    if n == 0:
        raise ValueError("empty dataset")
    cons = constraints_for(kind)
    rates = []
    for c in cons:
        s = c.sides(a, y)
        n1 = int(np.sum(s == ConstraintSide.GAMMA1))
        n0 = int(np.sum(s == ConstraintSide.GAMMA0))
        if n1 == 0:
            raise ZeroGroupRate(c.constraint_id, 1)
        if n0 == 0:
            raise ZeroGroupRate(c.constraint_id, 0)
        rates.append(GroupRates(n1 / n, n0 / n))
    return FairnessSpec(kind, cons, tuple(rates))
