"""Campaign analytics: judgment-depth counts, trigger distribution,
subject cross-tabs, nominal-scale agreement, and the chi-square association
test.

Agreement is computed through the value-coincidence matrix: every unit
(image) with m >= 2 comment categories contributes weight 1/(m-1) for each
ordered pair of distinct value slots. The matrix is accumulated in exact
rationals so anchor cases come out exact (perfect agreement is 1.0, not
0.999...); conversion to float happens only at the very end.

All functions are pure over :class:`~annocamp.store.CampaignSnapshot`
inputs and are safe to run concurrently.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from . import errors
from .model import SUBJECT_LABELS
from .special import chi_square_p_value
from .store import CampaignSnapshot


# -- agreement ---------------------------------------------------------------

@dataclass(frozen=True)
class AgreementUnits:
    """Categorical values grouped per unit (image).

    Units with fewer than two values stay in the map but are skipped by the
    coincidence computation.
    """

    units: dict[str, tuple[str, ...]]
    categories: tuple[str, ...]

    def pairable_units(self) -> dict[str, tuple[str, ...]]:
        return {u: v for u, v in self.units.items() if len(v) >= 2}

    def pairable_values(self) -> int:
        return sum(len(v) for v in self.units.values() if len(v) >= 2)


def units_from_values(values: dict[str, Sequence[str]]) -> AgreementUnits:
    """Build AgreementUnits from raw per-unit value lists, deriving the
    category list from the values (sorted)."""
    cats = sorted({v for vals in values.values() for v in vals})
    return AgreementUnits(
        units={u: tuple(vals) for u, vals in values.items()},
        categories=tuple(cats),
    )


def build_units(
    snapshot: CampaignSnapshot, exclude_category: str | None = None
) -> AgreementUnits:
    """One unit per image with >= 1 comment, holding the trigger categories
    of all its comments. ``exclude_category`` removes matching values before
    the pairability filter is applied, so a two-comment unit can drop out of
    the agreement computation entirely."""
    categories = snapshot.campaign.category_set
    if exclude_category is not None and exclude_category not in categories:
        raise errors.UnknownCategory(
            f"{exclude_category!r} is not one of the campaign categories",
            field="exclude",
        )
    effective = tuple(c for c in categories if c != exclude_category)
    units: dict[str, tuple[str, ...]] = {}
    for image_id, comments in snapshot.comments_by_image().items():
        values = tuple(
            c.trigger_category
            for c in comments
            if c.trigger_category != exclude_category
        )
        units[image_id] = values
    return AgreementUnits(units=units, categories=effective)


@dataclass(frozen=True)
class CoincidenceMatrix:
    """Symmetric within-unit value-coincidence counts, in exact rationals.

    ``o[i][j]`` pairs ``categories[i]`` with ``categories[j]``; ``n_c`` are
    the per-category marginals and ``n`` the number of pairable values.
    """

    categories: tuple[str, ...]
    o: tuple[tuple[Fraction, ...], ...]
    n_c: tuple[Fraction, ...]
    n: int

    def as_floats(self) -> list[list[float]]:
        return [[float(x) for x in row] for row in self.o]


def coincidence_matrix(units: AgreementUnits) -> CoincidenceMatrix:
    index = {c: k for k, c in enumerate(units.categories)}
    size = len(units.categories)
    o = [[Fraction(0)] * size for _ in range(size)]
    n = 0
    for values in units.units.values():
        m = len(values)
        if m < 2:
            continue
        for v in values:
            if v not in index:
                raise errors.UnknownCategory(
                    f"value {v!r} is not in the category list"
                )
        weight = Fraction(1, m - 1)
        for i, vi in enumerate(values):
            for j, vj in enumerate(values):
                if i != j:
                    o[index[vi]][index[vj]] += weight
        n += m
    if n == 0:
        raise errors.NoPairableUnits(
            "no unit has two or more values; agreement is undefined"
        )
    rows = tuple(tuple(row) for row in o)
    n_c = tuple(sum(row, Fraction(0)) for row in rows)
    return CoincidenceMatrix(categories=units.categories, o=rows, n_c=n_c, n=n)


def krippendorff_alpha(units: AgreementUnits) -> float:
    """Nominal-scale chance-corrected agreement, 1 - D_o / D_e.

    Exactly 1.0 under perfect within-unit agreement. Raises
    DegenerateMarginals when every pairable value falls in one category and
    NoPairableUnits when no unit has two values.
    """
    matrix = coincidence_matrix(units)
    size = len(matrix.categories)
    observed = Fraction(0)  # sum of off-diagonal coincidences
    expected = Fraction(0)  # sum over c != c' of n_c * n_c'
    for i in range(size):
        for j in range(size):
            if i != j:
                observed += matrix.o[i][j]
                expected += matrix.n_c[i] * matrix.n_c[j]
    if expected == 0:
        raise errors.DegenerateMarginals(
            "all pairable values fall in a single category"
        )
    if observed == 0:
        return 1.0
    # alpha = 1 - (S_o / n) / (S_e / (n (n-1))) with exact arithmetic
    return float(1 - observed * (matrix.n - 1) / expected)


# -- contingency tables and the chi-square test -------------------------------

@dataclass(frozen=True)
class ContingencyTable:
    row_labels: tuple[str, ...]
    col_labels: tuple[str, ...]
    counts: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        for row in self.counts:
            if len(row) != len(self.col_labels):
                raise ValueError("count rows must match col_labels")
            if any(c < 0 for c in row):
                raise ValueError("counts must be non-negative")
        if len(self.counts) != len(self.row_labels):
            raise ValueError("counts must match row_labels")

    @property
    def n(self) -> int:
        return sum(sum(row) for row in self.counts)

    def row_sums(self) -> tuple[int, ...]:
        return tuple(sum(row) for row in self.counts)

    def col_sums(self) -> tuple[int, ...]:
        return tuple(sum(col) for col in zip(*self.counts))

    def column_percentages(self) -> tuple[tuple[float, ...], ...]:
        sums = self.col_sums()
        return tuple(
            tuple(100.0 * c / s if s else 0.0 for c, s in zip(row, sums))
            for row in self.counts
        )


@dataclass(frozen=True)
class ChiSquareResult:
    statistic: float
    dof: int
    p_value: float


def chi_square_statistic(table: ContingencyTable) -> float:
    """Pearson chi-square statistic, sum over cells of (obs-exp)^2/exp."""
    row_sums = table.row_sums()
    col_sums = table.col_sums()
    if any(s == 0 for s in row_sums) or any(s == 0 for s in col_sums):
        raise errors.ZeroMarginal("every row and column must have a positive sum")
    n = table.n
    stat = 0.0
    for i, row in enumerate(table.counts):
        for j, obs in enumerate(row):
            exp = row_sums[i] * col_sums[j] / n
            stat += (obs - exp) ** 2 / exp
    return stat


def chi_square_test(table: ContingencyTable) -> ChiSquareResult:
    rows, cols = len(table.row_labels), len(table.col_labels)
    if rows < 2 or cols < 2:
        raise errors.InvalidConfig(
            "chi-square needs at least a 2x2 table", field="table"
        )
    stat = chi_square_statistic(table)
    dof = (rows - 1) * (cols - 1)
    return ChiSquareResult(
        statistic=stat, dof=dof, p_value=chi_square_p_value(stat, dof)
    )


# -- campaign tables -----------------------------------------------------------

@dataclass(frozen=True)
class DepthRow:
    min_judgments: int
    images_with_comment: int
    total_comments: int
    images_without_comment: int


def judgment_depth_table(snapshot: CampaignSnapshot) -> list[DepthRow]:
    """For n in 1..max depth: images with >= n judgments, split by whether
    they carry a comment, plus the comment total on the commented ones."""
    counts = snapshot.judgment_counts()
    if not counts:
        return []
    comments = snapshot.comments_by_image()
    rows = []
    for depth in range(1, max(counts.values()) + 1):
        with_comment = 0
        total_comments = 0
        without_comment = 0
        for image_id, k in counts.items():
            if k < depth:
                continue
            n_comments = len(comments.get(image_id, ()))
            if n_comments:
                with_comment += 1
                total_comments += n_comments
            else:
                without_comment += 1
        rows.append(DepthRow(depth, with_comment, total_comments, without_comment))
    return rows


def trigger_distribution(snapshot: CampaignSnapshot) -> dict[str, int]:
    """Comments per trigger category, zeros included, in category order."""
    out = {c: 0 for c in snapshot.campaign.category_set}
    for j in snapshot.judgments:
        if j.comment is not None:
            out[j.comment.trigger_category] = out.get(j.comment.trigger_category, 0) + 1
    return out


@dataclass(frozen=True)
class CrossTabResult:
    table: ContingencyTable
    excluded_comments: int


def subject_trigger_crosstab(snapshot: CampaignSnapshot) -> CrossTabResult:
    """Comments per (trigger, subject) cell; comments on images without a
    subject label are excluded and counted alongside."""
    triggers = snapshot.campaign.category_set
    cells = {t: {s: 0 for s in SUBJECT_LABELS} for t in triggers}
    excluded = 0
    for j in snapshot.judgments:
        if j.comment is None:
            continue
        subject = snapshot.images[j.image_id].subject_label
        if subject is None:
            excluded += 1
            continue
        cells[j.comment.trigger_category][subject] += 1
    table = ContingencyTable(
        row_labels=triggers,
        col_labels=SUBJECT_LABELS,
        counts=tuple(
            tuple(cells[t][s] for s in SUBJECT_LABELS) for t in triggers
        ),
    )
    return CrossTabResult(table=table, excluded_comments=excluded)


def subject_verdict_distribution(
    snapshot: CampaignSnapshot, no_sample: Iterable[str]
) -> ContingencyTable:
    """Subjects (rows) against Yes/No (columns): the Yes column counts images
    with at least one comment; the No column counts the supplied sample of
    never-commented images."""
    comments = snapshot.comments_by_image()
    counts = snapshot.judgment_counts()
    yes = {s: 0 for s in SUBJECT_LABELS}
    for image_id in comments:
        subject = snapshot.images[image_id].subject_label
        if subject is None:
            raise errors.UnlabeledImage(
                f"commented image {image_id} has no subject label"
            )
        yes[subject] += 1
    no = {s: 0 for s in SUBJECT_LABELS}
    for image_id in no_sample:
        if image_id in comments:
            raise errors.SampleContainsCommentedImage(
                f"image {image_id} in the no-sample has a comment"
            )
        image = snapshot.images.get(image_id)
        if image is None:
            raise errors.InvalidSample(f"no-sample image {image_id!r} is unknown")
        if counts.get(image_id, 0) == 0:
            raise errors.InvalidSample(
                f"no-sample image {image_id} was never judged"
            )
        if image.subject_label is None:
            raise errors.InvalidSample(
                f"no-sample image {image_id} has no subject label"
            )
        no[image.subject_label] += 1
    return ContingencyTable(
        row_labels=SUBJECT_LABELS,
        col_labels=("Yes", "No"),
        counts=tuple((yes[s], no[s]) for s in SUBJECT_LABELS),
    )


# -- report emission -------------------------------------------------------------

REPORT_NAMES = (
    "judgment-depth",
    "trigger-distribution",
    "subject-trigger",
    "subject-verdict",
    "alpha",
    "chi2",
)


@dataclass(frozen=True)
class Report:
    name: str
    columns: tuple[str, ...] = ()
    rows: tuple[tuple, ...] = ()
    stats: dict | None = None


def _sig6(value: float) -> float:
    return float(f"{value:.6g}")


def get_report(
    snapshot: CampaignSnapshot,
    name: str,
    exclude: str | None = None,
    no_sample: Iterable[str] | None = None,
) -> Report:
    if name == "judgment-depth":
        rows = judgment_depth_table(snapshot)
        return Report(
            name=name,
            columns=(
                "min_judgments",
                "images_with_comment",
                "total_comments",
                "images_without_comment",
            ),
            rows=tuple(
                (
                    r.min_judgments,
                    r.images_with_comment,
                    r.total_comments,
                    r.images_without_comment,
                )
                for r in rows
            ),
        )
    if name == "trigger-distribution":
        dist = trigger_distribution(snapshot)
        return Report(
            name=name,
            columns=("category", "comments"),
            rows=tuple(dist.items()),
        )
    if name == "subject-trigger":
        result = subject_trigger_crosstab(snapshot)
        return Report(
            name=name,
            columns=("trigger",) + result.table.col_labels,
            rows=tuple(
                (label,) + row
                for label, row in zip(result.table.row_labels, result.table.counts)
            ),
            stats={"excluded_comments": result.excluded_comments},
        )
    if name == "subject-verdict":
        table = subject_verdict_distribution(snapshot, no_sample or ())
        percents = table.column_percentages()
        return Report(
            name=name,
            columns=("subject", "yes", "no", "yes_percent", "no_percent"),
            rows=tuple(
                (label, row[0], row[1], _sig6(pct[0]), _sig6(pct[1]))
                for label, row, pct in zip(table.row_labels, table.counts, percents)
            ),
        )
    if name == "alpha":
        units = build_units(snapshot, exclude_category=exclude)
        alpha = krippendorff_alpha(units)
        return Report(
            name=name,
            stats={
                "alpha": _sig6(alpha),
                "pairable_units": len(units.pairable_units()),
                "pairable_values": units.pairable_values(),
                "excluded_category": exclude or "",
            },
        )
    if name == "chi2":
        table = subject_verdict_distribution(snapshot, no_sample or ())
        result = chi_square_test(table)
        return Report(
            name=name,
            columns=("subject", "yes", "no"),
            rows=tuple(
                (label,) + row for label, row in zip(table.row_labels, table.counts)
            ),
            stats={
                "statistic": _sig6(result.statistic),
                "dof": result.dof,
                "p_value": _sig6(result.p_value),
                "n": table.n,
            },
        )
    raise errors.UnknownReport(
        f"unknown report {name!r}; valid names: {', '.join(REPORT_NAMES)}"
    )


def report_to_csv(report: Report) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if report.columns:
        writer.writerow(report.columns)
        for row in report.rows:
            writer.writerow(row)
        if report.stats:
            for key, value in report.stats.items():
                buf.write(f"# {key} = {value}\n")
    elif report.stats:
        writer.writerow(("metric", "value"))
        for key, value in report.stats.items():
            writer.writerow((key, value))
    return buf.getvalue()


def report_to_json(report: Report) -> str:
    body: dict = {"report": report.name}
    if report.columns:
        body["columns"] = list(report.columns)
        body["rows"] = [list(r) for r in report.rows]
    if report.stats is not None:
        body["stats"] = report.stats
    return json.dumps(body, indent=2)
