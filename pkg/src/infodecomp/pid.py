"""Pointwise partial information decomposition.

For one event, two sources y1, y2 and a target x, the decomposition splits
the joint pointwise information i(y1,y2;x) into redundancy, two uniqueness
terms and synergy:

    r  = min(-log p(y1), -log p(y2)) - min(-log p(y1|x), -log p(y2|x))
    u1 = i(y1;x) - r
    u2 = i(y2;x) - r
    s  = i(y1,y2;x) - r - u1 - u2

with -log p(yi|x) = -log p(yi) - i(yi;x). All quantities are in nats and may
be negative: pointwise information is signed, and the redundancy is itself
the difference of an informative and a misinformative part. Conditional
decompositions use the same formulas with every probability and information
term conditioned on the context.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeMismatchError
from .fields import LatentField

_TABLE_TOL = 1e-12


@dataclass(frozen=True)
class PointwiseInputs:
    """Per-event quantities feeding the decomposition (all in nats).

    ``neg_log_p1``/``neg_log_p2`` are the source surprisals -log p(yi) (or
    -log p(yi|context) in the conditional variant); ``mi1``/``mi2``/``mi_joint``
    are the pointwise informations i(y1;x), i(y2;x), i(y1,y2;x).
    """

    neg_log_p1: float
    neg_log_p2: float
    mi1: float
    mi2: float
    mi_joint: float

    def __post_init__(self):
        for name in ("neg_log_p1", "neg_log_p2", "mi1", "mi2", "mi_joint"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise DomainError(f"{name} must be finite, got {v!r}")
        if self.neg_log_p1 < 0 or self.neg_log_p2 < 0:
            raise DomainError("surprisals -log p(y) must be nonnegative")


@dataclass(frozen=True)
class PidAtoms:
    """The four decomposition terms for one event or one pixel (nats)."""

    redundancy: float
    unique1: float
    unique2: float
    synergy: float

    @property
    def total(self) -> float:
        return self.redundancy + self.unique1 + self.unique2 + self.synergy


def redundancy_pointwise(inputs: PointwiseInputs) -> float:
    """Redundancy of one event: informative minus misinformative min-surprisal."""
    r_plus = min(inputs.neg_log_p1, inputs.neg_log_p2)
    r_minus = min(inputs.neg_log_p1 - inputs.mi1, inputs.neg_log_p2 - inputs.mi2)
    return r_plus - r_minus


def decompose_pointwise(inputs: PointwiseInputs) -> PidAtoms:
    """Full decomposition of one event; synergy is the additivity residual."""
    r = redundancy_pointwise(inputs)
    u1 = inputs.mi1 - r
    u2 = inputs.mi2 - r
    # grouping (u1 + u2) keeps the residual exactly symmetric under source swap
    s = (inputs.mi_joint - r) - (u1 + u2)
    return PidAtoms(redundancy=r, unique1=u1, unique2=u2, synergy=s)


def decompose_field(
    neg_log_p1: float,
    neg_log_p2: float,
    mi1_field: LatentField,
    mi2_field: LatentField,
    mi_joint_field: LatentField,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Element-wise decomposition with shared scalar priors.

    Returns (r, u1, u2, s) fields of the common input shape.
    """
    if not (math.isfinite(neg_log_p1) and math.isfinite(neg_log_p2)):
        raise DomainError("surprisals must be finite")
    if neg_log_p1 < 0 or neg_log_p2 < 0:
        raise DomainError("surprisals -log p(y) must be nonnegative")
    mi1 = np.asarray(mi1_field, dtype=np.float64)
    mi2 = np.asarray(mi2_field, dtype=np.float64)
    mij = np.asarray(mi_joint_field, dtype=np.float64)
    if mi2.shape != mi1.shape:
        raise ShapeMismatchError("mi2_field", mi1.shape, mi2.shape)
    if mij.shape != mi1.shape:
        raise ShapeMismatchError("mi_joint_field", mi1.shape, mij.shape)
    for name, arr in (("mi1_field", mi1), ("mi2_field", mi2), ("mi_joint_field", mij)):
        if not np.all(np.isfinite(arr)):
            raise DomainError(f"{name} contains non-finite values")

    r = np.minimum(neg_log_p1, neg_log_p2) - np.minimum(neg_log_p1 - mi1, neg_log_p2 - mi2)
    u1 = mi1 - r
    u2 = mi2 - r
    s = (mij - r) - (u1 + u2)
    return r, u1, u2, s


@dataclass(frozen=True)
class DiscreteJoint:
    """A finite joint distribution p(y1, y2, x) for the enumeration oracle."""

    table: np.ndarray  # shape (n1, n2, nx)

    def __post_init__(self):
        table = np.asarray(self.table, dtype=np.float64)
        if table.ndim != 3:
            raise DomainError(f"joint table must be 3-D, got {table.ndim} dims")
        if np.any(table < 0):
            raise DomainError("joint table entries must be nonnegative")
        if abs(table.sum() - 1.0) > _TABLE_TOL:
            raise DomainError(f"joint table mass {table.sum()!r} not within {_TABLE_TOL} of 1")
        object.__setattr__(self, "table", table)


@dataclass(frozen=True)
class OracleEvent:
    """One enumerated event with its probability, informations and atoms."""

    y1: int
    y2: int
    x: int
    p: float
    i1: float
    i2: float
    i_joint: float
    atoms: PidAtoms


@dataclass(frozen=True)
class OracleResult:
    expected: PidAtoms
    expected_mi_joint: float
    events: list[OracleEvent]


def discrete_pid_oracle(joint: DiscreteJoint) -> OracleResult:
    """Exact expected atoms by enumerating every positive-probability event.

    Informations are computed from the table's marginals, each event is
    decomposed pointwise, and the expectation weights events by probability.
    """
    t = joint.table
    p_y1 = t.sum(axis=(1, 2))
    p_y2 = t.sum(axis=(0, 2))
    p_x = t.sum(axis=(0, 1))
    p_y1y2 = t.sum(axis=2)
    p_y1x = t.sum(axis=1)
    p_y2x = t.sum(axis=0)

    events: list[OracleEvent] = []
    acc = np.zeros(4)
    acc_joint = 0.0
    for y1, y2, x in np.argwhere(t > 0.0):
        p = t[y1, y2, x]
        # conditioning uses exact log ratios; marginals here are > 0 because
        # the event itself has positive probability
        i1 = math.log(p_y1x[y1, x] / (p_y1[y1] * p_x[x]))
        i2 = math.log(p_y2x[y2, x] / (p_y2[y2] * p_x[x]))
        i_joint = math.log(p / (p_y1y2[y1, y2] * p_x[x]))
        inputs = PointwiseInputs(
            neg_log_p1=-math.log(p_y1[y1]),
            neg_log_p2=-math.log(p_y2[y2]),
            mi1=i1,
            mi2=i2,
            mi_joint=i_joint,
        )
        atoms = decompose_pointwise(inputs)
        events.append(OracleEvent(int(y1), int(y2), int(x), float(p), i1, i2, i_joint, atoms))
        acc += p * np.array([atoms.redundancy, atoms.unique1, atoms.unique2, atoms.synergy])
        acc_joint += p * i_joint

    expected = PidAtoms(*(float(v) for v in acc))
    return OracleResult(expected=expected, expected_mi_joint=float(acc_joint), events=events)


def oracle_table_csv(result: OracleResult) -> str:
    """Render the per-event oracle table as CSV."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["y1", "y2", "x", "p", "i1", "i2", "i_joint", "r", "u1", "u2", "s"])
    for ev in result.events:
        writer.writerow(
            [
                ev.y1,
                ev.y2,
                ev.x,
                repr(ev.p),
                repr(ev.i1),
                repr(ev.i2),
                repr(ev.i_joint),
                repr(ev.atoms.redundancy),
                repr(ev.atoms.unique1),
                repr(ev.atoms.unique2),
                repr(ev.atoms.synergy),
            ]
        )
    return buf.getvalue()


def gate_joint(name: str) -> DiscreteJoint:
    """Canonical two-bit test gates: 'xor', 'rdn' (y1=y2=x), 'unq' (x=y1)."""
    name = name.lower()
    t = np.zeros((2, 2, 2))
    if name == "xor":
        for y1 in range(2):
            for y2 in range(2):
                t[y1, y2, y1 ^ y2] = 0.25
    elif name == "rdn":
        for y in range(2):
            t[y, y, y] = 0.5
    elif name == "unq":
        for y1 in range(2):
            for y2 in range(2):
                t[y1, y2, y1] = 0.25
    else:
        raise DomainError(f"unknown gate {name!r}; expected xor, rdn or unq")
    return DiscreteJoint(t)
