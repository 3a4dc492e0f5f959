"""Accuracy-matrix bookkeeping and continual-learning metrics.

The lower-triangular matrix a[j][i] holds accuracy on domain i's test
set after training stage j, stored as exact correct/total counts so
incremental and batch computation agree bitwise. Reported forgetting is
the negated mean backward transfer (larger positive = more forgetting).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .autodiff import ContractViolation


class StateError(RuntimeError):
    pass


@dataclass
class AccuracyMatrix:
    n_domains: int
    # counts[(j, i)] = (correct, total) on domain i after stage j, i <= j
    counts: dict[tuple[int, int], tuple[int, int]] = field(default_factory=dict)

    def record(self, stage: int, domain: int, correct: int, total: int) -> None:
        if not 1 <= domain <= stage <= self.n_domains:
            raise ContractViolation(
                f"(stage={stage}, domain={domain}) outside the lower triangle")
        if not 0 <= correct <= total or total <= 0:
            raise ContractViolation(f"bad counts {correct}/{total}")
        self.counts[(stage, domain)] = (correct, total)

    def accuracy(self, stage: int, domain: int) -> Fraction:
        c, n = self.counts[(stage, domain)]
        return Fraction(c, n)

    def _require_final_row(self) -> None:
        for i in range(1, self.n_domains + 1):
            if (self.n_domains, i) not in self.counts:
                raise StateError(f"final row missing domain {i}")

    def _require_full_triangle(self) -> None:
        for j in range(1, self.n_domains + 1):
            for i in range(1, j + 1):
                if (j, i) not in self.counts:
                    raise StateError(f"missing entry (stage={j}, domain={i})")


def average_accuracy(m: AccuracyMatrix) -> Fraction:
    """Sample-weighted accuracy over all test sets under the final model."""
    m._require_final_row()
    T = m.n_domains
    correct = sum(m.counts[(T, i)][0] for i in range(1, T + 1))
    total = sum(m.counts[(T, i)][1] for i in range(1, T + 1))
    return Fraction(correct, total)


def avg_task_accuracy(m: AccuracyMatrix) -> Fraction:
    """Unweighted mean of per-domain accuracies under the final model."""
    m._require_final_row()
    T = m.n_domains
    return sum(m.accuracy(T, i) for i in range(1, T + 1)) / T


def forgetting(m: AccuracyMatrix) -> tuple[list[Fraction], Fraction | None]:
    """Per-domain backward transfer and the negated overall forgetting.

    Returns (bwt list for domains 1..T-1, reported forgetting or None when
    T < 2; reported = -mean(bwt), so positive values mean forgetting).
    """
    m._require_full_triangle()
    T = m.n_domains
    if T < 2:
        return [], None
    bwt = []
    for i in range(1, T):
        deltas = [m.accuracy(j, i) - m.accuracy(i, i) for j in range(i + 1, T + 1)]
        bwt.append(sum(deltas) / (T - i))
    raw = sum(bwt) / (T - 1)
    return bwt, -raw


@dataclass
class MetricsReport:
    a_a: Fraction
    a_t: Fraction
    f_t: Fraction | None
    bwt: list[Fraction]
    a_cls: Fraction | None = None
    seen_average: list[Fraction] = field(default_factory=list)

    @staticmethod
    def from_matrix(m: AccuracyMatrix,
                    a_cls: Fraction | None = None) -> "MetricsReport":
        bwt, f_t = forgetting(m)
        seen = []
        for j in range(1, m.n_domains + 1):
            accs = [m.accuracy(j, i) for i in range(1, j + 1)]
            seen.append(sum(accs) / j)
        return MetricsReport(a_a=average_accuracy(m), a_t=avg_task_accuracy(m),
                             f_t=f_t, bwt=bwt, a_cls=a_cls, seen_average=seen)


def matrix_csv(m: AccuracyMatrix) -> str:
    lines = ["stage,domain,correct,total,accuracy"]
    for j in range(1, m.n_domains + 1):
        for i in range(1, j + 1):
            if (j, i) in m.counts:
                c, n = m.counts[(j, i)]
                lines.append(f"{j},{i},{c},{n},{c / n:.10f}")
    return "\n".join(lines) + "\n"


def summary_text(report: MetricsReport) -> str:
    lines = [
        f"A_A  {float(report.a_a):.6f}",
        f"A_T  {float(report.a_t):.6f}",
        "F_T  " + (f"{float(report.f_t):.6f}" if report.f_t is not None
                   else "undefined (T < 2)"),
    ]
    if report.a_cls is not None:
        lines.append(f"A_cls  {float(report.a_cls):.6f}")
    for i, b in enumerate(report.bwt, start=1):
        lines.append(f"BWT_{i}  {float(b):.6f}")
    for j, s in enumerate(report.seen_average, start=1):
        lines.append(f"seen_avg_stage_{j}  {float(s):.6f}")
    return "\n".join(lines) + "\n"
