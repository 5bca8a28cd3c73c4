"""Transactional claims data model.

Ingests transaction-level CSV files (rich "splice" schema with case
estimates, or the reduced "cas" schema), discretizes each claim into
per-period development records, and builds cumulative triangles.

Conventions used throughout:

* calendar period ``t``, accident period ``i``, development period
  ``j = t + 1 - i``, periods since notification ``tau = t - notif + 1``;
* transaction times live on a continuous axis measured in periods, and a
  time belongs to the half-open period ``(t - 1, t]`` (so an integer time
  falls in the earlier period);
* amounts are in money units as paid (inflation, if any, is already
  materialized in ``cumpaid`` by whoever produced the file);
* a settled claim's ultimate is its final cumulative paid, and the true
  outstanding liability at development ``j`` is ``ultimate - paid_j``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

from .errors import DataError, IntegrityError, ParseError

PAYMENT_TYPES = frozenset({"P", "PMi", "PMa"})
TXN_TYPES = frozenset({"Mi", "Ma", "P", "PMi", "PMa", ""})

SPLICE_COLUMNS = [
    "claim_no",
    "claim_size",
    "txn_time",
    "txn_type",
    "incurred",
    "OCL",
    "cumpaid",
    "accident_period",
]
CAS_COLUMNS = ["claim_no", "claim_size", "txn_time", "cumpaid", "accident_period"]

# Tolerance for deciding a claim finished paying (cas schema, where the
# only settlement signal is cumpaid reaching the recorded claim size).
_SETTLE_RTOL = 1e-6


def period_of(txn_time: float) -> int:
    """Calendar period containing a transaction time, interval (t-1, t]."""
    return int(math.ceil(txn_time))


@dataclass(frozen=True)
class Transaction:
    claim_no: str
    txn_time: float
    txn_type: str
    cumpaid: float
    accident_period: int
    claim_size: float = 0.0
    incurred: float | None = None
    case_ocl: float | None = None

    @property
    def is_payment(self) -> bool:
        return self.txn_type in PAYMENT_TYPES

    @property
    def period(self) -> int:
        return period_of(self.txn_time)


@dataclass(frozen=True)
class DevelopmentRecord:
    """State of one claim at the end of one development period."""

    dev_period: int
    cum_paid: float
    txn_types: frozenset[str]
    n_pay: int
    case: float | None
    true_ocl: float | None  # None while the claim is open / censored

    @property
    def has_payment(self) -> bool:
        return bool(self.txn_types & PAYMENT_TYPES)


@dataclass
class Claim:
    claim_no: str
    accident_period: int
    notification_period: int
    settlement_period: int | None
    repdel: int
    claim_size: float
    transactions: list[Transaction]
    dev_records: list[DevelopmentRecord] = field(default_factory=list)

    @property
    def settled(self) -> bool:
        return self.settlement_period is not None

    @property
    def ultimate(self) -> float | None:
        """Final cumulative paid, defined for settled claims only."""
        if not self.settled:
            return None
        return self.transactions[-1].cumpaid

    def settled_by(self, t: int) -> bool:
        return self.settled and self.settlement_period <= t

    def open_at(self, t: int) -> bool:
        """Notified by t but not yet settled at the end of t."""
        return self.notification_period <= t and not self.settled_by(t)

    def paid_at(self, t: int) -> float:
        """Cumulative paid by the end of calendar period t."""
        paid = 0.0
        for txn in self.transactions:
            if txn.period <= t:
                paid = txn.cumpaid
            else:
                break
        return paid

    def case_at(self, t: int) -> float | None:
        """Latest case OCL estimate observed by the end of period t."""
        case = None
        for txn in self.transactions:
            if txn.period > t:
                break
            if txn.case_ocl is not None:
                case = txn.case_ocl
        return case

    def incurred_at(self, t: int) -> float | None:
        """Latest case estimate of the ultimate observed by end of period t."""
        inc = None
        for txn in self.transactions:
            if txn.period > t:
                break
            if txn.incurred is not None:
                inc = txn.incurred
        return inc

    def true_ocl_at(self, t: int) -> float | None:
        """Ultimate minus paid-to-date; requires the claim to be settled."""
        ult = self.ultimate
        if ult is None:
            return None
        return ult - self.paid_at(t)

    def psn_at(self, t: int) -> int:
        """Periods since notification, counting the notification period as 1."""
        return t - self.notification_period + 1

    def dev_record_at(self, t: int) -> DevelopmentRecord | None:
        j = t + 1 - self.accident_period
        for rec in self.dev_records:
            if rec.dev_period == j:
                return rec
        return None


@dataclass
class Dataset:
    claims: list[Claim]
    period_unit: str = "quarter"  # "quarter" | "year"
    schema: str = "splice"  # "splice" | "cas"
    max_calendar_period: int = 0
    n_dropped_zero_loss: int = 0
    n_flagged_unsettled: int = 0

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for c in self.claims:
            if c.claim_no in seen:
                raise IntegrityError(f"duplicate claim_no {c.claim_no!r}")
            seen.add(c.claim_no)

    def __len__(self) -> int:
        return len(self.claims)

    def by_no(self, claim_no: str) -> Claim:
        for c in self.claims:
            if c.claim_no == claim_no:
                return c
        raise KeyError(claim_no)

    def settled_claims(self, by: int | None = None) -> list[Claim]:
        t = by if by is not None else self.max_calendar_period
        return [c for c in self.claims if c.settled_by(t)]

    def open_claims(self, at: int) -> list[Claim]:
        return [c for c in self.claims if c.open_at(at)]

    def accident_periods(self) -> list[int]:
        if not self.claims:
            return []
        lo = min(c.accident_period for c in self.claims)
        hi = max(c.accident_period for c in self.claims)
        return list(range(lo, hi + 1))


@dataclass
class Triangle:
    """Cumulative run-off triangle; cells exist for i + j - 1 <= valuation."""

    kind: str  # "cum_paid" | "cum_count" | "ppci"
    aps: list[int]
    valuation: int
    values: "object"  # numpy (len(aps), max_dev) array, NaN where absent

    @property
    def max_dev(self) -> int:
        return self.values.shape[1]

    def cell(self, i: int, j: int) -> float:
        import numpy as np

        row = self.aps.index(i)
        v = self.values[row, j - 1]
        if np.isnan(v):
            raise KeyError(f"cell ({i}, {j}) beyond valuation {self.valuation}")
        return float(v)

    def latest_dev(self, i: int) -> int:
        """Latest observed development column for accident period i."""
        return min(self.valuation + 1 - i, self.max_dev)


def _parse_row(row: dict, line_no: int, schema: str) -> Transaction:
    def fnum(key: str, optional: bool = False) -> float | None:
        raw = (row.get(key) or "").strip()
        if raw == "" or raw.upper() in {"NA", "NAN", "NONE"}:
            if optional:
                return None
            raise ParseError(f"row {line_no}: missing value for {key!r}")
        try:
            return float(raw)
        except ValueError:
            raise ParseError(f"row {line_no}: cannot parse {key}={raw!r}") from None

    claim_no = (row.get("claim_no") or "").strip()
    if not claim_no:
        raise ParseError(f"row {line_no}: empty claim_no")
    txn_time = fnum("txn_time")
    if txn_time <= 0:
        raise ParseError(f"row {line_no}: txn_time must be positive")
    cumpaid = fnum("cumpaid")
    ap_raw = fnum("accident_period")
    if ap_raw != int(ap_raw) or ap_raw < 1:
        raise ParseError(f"row {line_no}: accident_period must be an integer >= 1")
    claim_size = fnum("claim_size")

    if schema == "splice":
        txn_type = (row.get("txn_type") or "").strip()
        if txn_type not in TXN_TYPES:
            raise ParseError(f"row {line_no}: unknown txn_type {txn_type!r}")
        incurred = fnum("incurred", optional=True)
        case_ocl = fnum("OCL", optional=True)
    else:
        txn_type = ""  # inferred later from cumpaid increments
        incurred = None
        case_ocl = None

    return Transaction(
        claim_no=claim_no,
        txn_time=txn_time,
        txn_type=txn_type,
        cumpaid=cumpaid,
        accident_period=int(ap_raw),
        claim_size=claim_size,
        incurred=incurred,
        case_ocl=case_ocl,
    )


def _assemble_claim(txns: list[Transaction], schema: str) -> Claim | None:
    """Validate one claim's transactions and classify settled / unsettled.

    Returns None for zero-loss claims, raises IntegrityError on invariant
    violations, and marks unsettled claims with settlement_period=None.
    """
    txns = sorted(txns, key=lambda x: (x.txn_time, x.cumpaid))
    claim_no = txns[0].claim_no
    ap = txns[0].accident_period
    prev_paid = 0.0
    for txn in txns:
        if txn.accident_period != ap:
            raise IntegrityError(f"claim {claim_no}: accident_period not constant")
        if txn.cumpaid < prev_paid - 1e-9:
            raise IntegrityError(f"claim {claim_no}: cumpaid decreases over time")
        if txn.cumpaid < 0:
            raise IntegrityError(f"claim {claim_no}: negative cumpaid")
        prev_paid = txn.cumpaid

    if schema == "cas":
        # Infer payment flags from cumpaid increments.
        inferred = []
        prev = 0.0
        for txn in txns:
            typ = "P" if txn.cumpaid > prev else ""
            inferred.append(replace(txn, txn_type=typ))
            prev = txn.cumpaid
        txns = inferred

    claim_size = txns[0].claim_size
    final = txns[-1]
    if claim_size <= 0 and final.cumpaid <= 0:
        return None  # non-claim (zero loss), dropped

    if schema == "splice":
        settled = final.case_ocl is not None and abs(final.case_ocl) < 1e-6
    else:
        settled = claim_size > 0 and abs(final.cumpaid - claim_size) <= _SETTLE_RTOL * max(
            claim_size, 1.0
        )

    notif_time = txns[0].txn_time
    notif_period = period_of(notif_time)
    repdel = period_of(notif_time) - ap
    if repdel < 0:
        raise IntegrityError(f"claim {claim_no}: notified before accident period")

    settlement = None
    if settled:
        # Settlement period = period of the final payment.
        pay_periods = [t.period for t in txns if t.is_payment]
        settlement = max(pay_periods) if pay_periods else notif_period

    return Claim(
        claim_no=claim_no,
        accident_period=ap,
        notification_period=notif_period,
        settlement_period=settlement,
        repdel=repdel,
        claim_size=claim_size,
        transactions=txns,
    )


def load_transactions(path: str, schema: str = "splice", period_unit: str | None = None) -> Dataset:
    """Load a transactions CSV into a validated Dataset.

    schema "splice" expects case-estimate columns; "cas" is the reduced
    column set with payment flags inferred from cumpaid increments.
    Zero-loss claims are dropped; claims whose payments never complete
    are kept but flagged open (callers typically exclude them).
    """
    if schema not in ("splice", "cas"):
        raise DataError(f"unknown schema {schema!r}")
    expected = SPLICE_COLUMNS if schema == "splice" else CAS_COLUMNS
    if period_unit is None:
        period_unit = "quarter" if schema == "splice" else "year"

    groups: dict[str, list[Transaction]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ParseError("empty file: header row required")
        missing = [c for c in expected if c not in reader.fieldnames]
        if missing:
            raise ParseError(f"missing columns for schema {schema!r}: {missing}")
        for line_no, row in enumerate(reader, start=2):
            txn = _parse_row(row, line_no, schema)
            groups.setdefault(txn.claim_no, []).append(txn)

    claims: list[Claim] = []
    n_zero = 0
    n_unsettled = 0
    for claim_no in groups:
        claim = _assemble_claim(groups[claim_no], schema)
        if claim is None:
            n_zero += 1
            continue
        if not claim.settled:
            n_unsettled += 1
        claims.append(claim)

    max_t = 0
    for c in claims:
        last = period_of(c.transactions[-1].txn_time)
        max_t = max(max_t, last)

    return Dataset(
        claims=claims,
        period_unit=period_unit,
        schema=schema,
        max_calendar_period=max_t,
        n_dropped_zero_loss=n_zero,
        n_flagged_unsettled=n_unsettled,
    )


def discretize(dataset: Dataset) -> Dataset:
    """Populate per-period development records for every claim.

    One record per development period from notification to settlement
    (or to the last observed period for open claims); paid and case
    values carry forward through quiet periods.
    """
    for claim in dataset.claims:
        if claim.settled:
            last_t = claim.settlement_period
        else:
            # Open claims stay observable through the data horizon; quiet
            # trailing periods carry the last known values forward.
            last_t = max(
                dataset.max_calendar_period,
                period_of(claim.transactions[-1].txn_time),
                claim.notification_period,
            )
        by_period: dict[int, list[Transaction]] = {}
        for txn in claim.transactions:
            by_period.setdefault(txn.period, []).append(txn)

        records: list[DevelopmentRecord] = []
        paid = 0.0
        case: float | None = None
        n_pay = 0
        ultimate = claim.ultimate
        for t in range(claim.notification_period, last_t + 1):
            types: set[str] = set()
            for txn in by_period.get(t, []):
                paid = txn.cumpaid
                if txn.case_ocl is not None:
                    case = txn.case_ocl
                if txn.txn_type:
                    types.add(txn.txn_type)
                if txn.is_payment:
                    n_pay += 1
            j = t + 1 - claim.accident_period
            true_ocl = None
            if ultimate is not None:
                true_ocl = ultimate - paid
                if true_ocl < -1e-6:
                    raise IntegrityError(
                        f"claim {claim.claim_no}: paid exceeds ultimate at dev {j}"
                    )
                true_ocl = max(true_ocl, 0.0)
            records.append(
                DevelopmentRecord(
                    dev_period=j,
                    cum_paid=paid,
                    txn_types=frozenset(types),
                    n_pay=n_pay,
                    case=case,
                    true_ocl=true_ocl,
                )
            )
        claim.dev_records = records
    return dataset


def build_triangle(
    dataset: Dataset, kind: str, valuation: int, settled_only: bool = False
) -> Triangle:
    """Aggregate claims into a cumulative triangle at the given valuation.

    kind "cum_paid" sums paid-to-date, "cum_count" counts claims notified
    by each (i, j) cell, and "ppci" divides paid by count cellwise with
    0/0 -> 0.
    """
    import numpy as np

    if kind not in ("cum_paid", "cum_count", "ppci"):
        raise DataError(f"unknown triangle kind {kind!r}")
    included = [
        c
        for c in dataset.claims
        if c.notification_period <= valuation and (not settled_only or c.settled_by(valuation))
    ]
    if not included:
        raise DataError("no claims available to build a triangle")

    lo = min(c.accident_period for c in included)
    hi = max(c.accident_period for c in included)
    aps = list(range(lo, hi + 1))
    max_dev = valuation - lo + 1

    paid = np.full((len(aps), max_dev), np.nan)
    count = np.full((len(aps), max_dev), np.nan)
    for row, i in enumerate(aps):
        for j in range(1, valuation - i + 2):
            t = i + j - 1
            paid[row, j - 1] = 0.0
            count[row, j - 1] = 0.0
    for c in included:
        row = aps.index(c.accident_period)
        for j in range(1, valuation - c.accident_period + 2):
            t = c.accident_period + j - 1
            if c.notification_period <= t:
                count[row, j - 1] += 1
                paid[row, j - 1] += c.paid_at(t)

    if kind == "cum_paid":
        values = paid
    elif kind == "cum_count":
        values = count
    else:
        with np.errstate(invalid="ignore", divide="ignore"):
            values = np.where(count > 0, paid / np.where(count > 0, count, 1.0), 0.0)
        values[np.isnan(paid)] = np.nan

    return Triangle(kind=kind, aps=aps, valuation=valuation, values=values)


def censor(dataset: Dataset, boundary: int) -> Dataset:
    """Temporal view of the data as observable at the end of `boundary`.

    Claims notified after the boundary disappear; transactions beyond it
    are dropped; settlement (and hence the ultimate and true OCL path) is
    known only when it happened inside the window.
    """
    out: list[Claim] = []
    for c in dataset.claims:
        if c.notification_period > boundary:
            continue
        txns = [t for t in c.transactions if t.period <= boundary]
        if not txns:
            continue
        settled = c.settled_by(boundary)
        out.append(
            Claim(
                claim_no=c.claim_no,
                accident_period=c.accident_period,
                notification_period=c.notification_period,
                settlement_period=c.settlement_period if settled else None,
                repdel=c.repdel,
                claim_size=c.claim_size,
                transactions=txns,
            )
        )
    view = Dataset(
        claims=out,
        period_unit=dataset.period_unit,
        schema=dataset.schema,
        max_calendar_period=min(dataset.max_calendar_period, boundary),
    )
    return discretize(view)


def write_transactions(dataset: Dataset, path: str, schema: str | None = None) -> None:
    """Export the transaction ledger as CSV (deterministic formatting)."""
    schema = schema or dataset.schema
    if schema not in ("splice", "cas"):
        raise DataError(f"unknown schema {schema!r}")
    cols = SPLICE_COLUMNS if schema == "splice" else CAS_COLUMNS

    def fmt(v: float | None) -> str:
        return "" if v is None else repr(float(v))

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for claim in dataset.claims:
            for txn in claim.transactions:
                if schema == "splice":
                    writer.writerow(
                        [
                            txn.claim_no,
                            fmt(txn.claim_size),
                            fmt(txn.txn_time),
                            txn.txn_type,
                            fmt(txn.incurred),
                            fmt(txn.case_ocl),
                            fmt(txn.cumpaid),
                            txn.accident_period,
                        ]
                    )
                else:
                    writer.writerow(
                        [
                            txn.claim_no,
                            fmt(txn.claim_size),
                            fmt(txn.txn_time),
                            fmt(txn.cumpaid),
                            txn.accident_period,
                        ]
                    )


def write_dev_records(dataset: Dataset, path: str) -> None:
    """Export the discretized development view as CSV."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "claim_no",
                "accident_period",
                "dev_period",
                "cum_paid",
                "n_pay",
                "case",
                "txn_types",
                "true_ocl",
            ]
        )
        for claim in dataset.claims:
            for rec in claim.dev_records:
                writer.writerow(
                    [
                        claim.claim_no,
                        claim.accident_period,
                        rec.dev_period,
                        repr(rec.cum_paid),
                        rec.n_pay,
                        "" if rec.case is None else repr(rec.case),
                        "|".join(sorted(rec.txn_types)),
                        "" if rec.true_ocl is None else repr(rec.true_ocl),
                    ]
                )
