"""Classical baselines (ridge, random forest) and deterministic mock
forecasters behind one forecaster surface.

Models are refit from scratch each window and pooled across tickers (one
cross-sectional model per window). Rows with any absent gated feature are
dropped, not imputed.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from datetime import date as Date

import numpy as np

from .errors import ConfigError, ModelError
from .features import FeatureFrame
from .market_data import AccessRecorder, ReturnFrame

logger = logging.getLogger(__name__)

KINDS = ("ridge", "random_forest", "llm_direct", "tllm", "mock")


@dataclass
class ForecasterSpec:
    """One configured forecaster: kind, hyperparameters, token budget.

    budget == 0 iff kind == llm_direct; budget > 0 iff kind == tllm.
    """

    name: str
    kind: str
    params: dict[str, str] = field(default_factory=dict)
    budget: int = 0
    model_id: str = ""

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"model {self.name}: unknown kind {self.kind!r}")
        if self.kind == "llm_direct" and self.budget != 0:
            raise ConfigError(f"model {self.name}: llm_direct requires budget 0")
        if self.kind == "tllm" and self.budget <= 0:
            raise ConfigError(f"model {self.name}: tllm requires budget > 0")


@dataclass
class ScoreFrame:
    """(date, ticker) -> forecast score for one model at one pipeline stage."""

    model: str
    stage: str  # raw | cal | cal_blend
    values: dict[tuple[Date, str], float] = field(default_factory=dict)
    provenance: tuple[str, ...] = ()
    invalid_dates: frozenset = frozenset()

    def dates(self) -> list[Date]:
        return sorted({d for d, _ in self.values})

    def by_date(self, day: Date) -> dict[str, float]:
        return {t: v for (d, t), v in self.values.items() if d == day}


@dataclass
class TrainingSet:
    """Pooled design matrix over (date, ticker) training rows."""

    columns: tuple[str, ...]
    X: np.ndarray
    y: np.ndarray
    rows: tuple[tuple[Date, str], ...]
    dropped: int = 0


def build_training_set(
    frame: FeatureFrame,
    returns: ReturnFrame,
    universe: tuple[str, ...],
    train_start: Date,
    train_end: Date,
    columns: tuple[str, ...],
    recorder: AccessRecorder | None = None,
) -> TrainingSet:
    """Assemble training rows whose labels are fully realized by train_end.

    A row (t, ticker) is kept only if every gated feature column is present
    and the k-day forward return both exists and ends at or before train_end
    (so no test-window close leaks into a label).
    """
    columns = tuple(sorted(columns))
    if recorder is not None:
        frame.attach_recorder(recorder)
        returns.attach_recorder(recorder)
    try:
        X_rows: list[list[float]] = []
        y_rows: list[float] = []
        keys: list[tuple[Date, str]] = []
        dropped = 0
        for day in frame.dates:
            if day < train_start or day > train_end:
                continue
            for ticker in universe:
                end = returns.end_date(ticker, day)
                if end is None or end > train_end:
                    continue
                target = returns.get(ticker, day)
                feats = []
                ok = True
                for name in columns:
                    v = frame.get(name, day, ticker)
                    if v is None:
                        ok = False
                        break
                    feats.append(v)
                if not ok:
                    dropped += 1
                    continue
                X_rows.append(feats)
                y_rows.append(target)
                keys.append((day, ticker))
        if dropped:
            logger.info("training set: dropped %d rows with absent features", dropped)
        X = np.array(X_rows, dtype=float) if X_rows else np.empty((0, len(columns)))
        y = np.array(y_rows, dtype=float)
        return TrainingSet(columns, X, y, tuple(keys), dropped)
    finally:
        if recorder is not None:
            frame.detach_recorder()
            returns.detach_recorder()


# -- ridge --------------------------------------------------------------------


@dataclass
class RidgeModel:
    columns: tuple[str, ...]
    beta: np.ndarray
    intercept: float

    def predict_rows(self, X: np.ndarray) -> np.ndarray:
        return X @ self.beta + self.intercept


def fit_ridge(train: TrainingSet, lam: float = 10.0) -> RidgeModel:
    """Solve min ||Xb - y||^2 + lam ||b||^2 by the normal equations.

    The intercept is unpenalized: features and target are centered, the
    penalized slope solves on the centered system, and the intercept is
    recovered from the means.
    """
    if lam < 0:
        raise ValueError(f"ridge lambda must be >= 0, got {lam}")
    n, p = train.X.shape
    if n < 2:
        raise ModelError(f"ridge needs >= 2 training rows, got {n}")
    x_mean = train.X.mean(axis=0)
    y_mean = float(train.y.mean())
    Xc = train.X - x_mean
    yc = train.y - y_mean
    A = Xc.T @ Xc + lam * np.eye(p)
    if lam == 0.0 and np.linalg.matrix_rank(A, hermitian=True) < p:
        raise ModelError(
            "singular normal equations at lambda=0; use lambda > 0"
        )
    try:
        beta = np.linalg.solve(A, Xc.T @ yc)
    except np.linalg.LinAlgError as exc:
        raise ModelError(f"ridge solve failed ({exc}); use lambda > 0") from None
    return RidgeModel(train.columns, beta, y_mean - float(x_mean @ beta))


# -- random forest --------------------------------------------------------------

# Nodes are tuples: leaves (value,), internal (feature, threshold, left, right).


def _best_split(
    X: np.ndarray, y: np.ndarray, feat_idx: np.ndarray, min_leaf: int
) -> tuple[int, float, float] | None:
    """Best variance-reducing split over candidate features.

    Candidates are midpoints between consecutive distinct sorted values.
    Returns (feature, threshold, combined SSE) or None if no valid split.
    """
    n = len(y)
    best: tuple[float, int, float] | None = None
    for j in feat_idx:
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        ys = y[order]
        csum = np.cumsum(ys)
        csq = np.cumsum(ys * ys)
        left_sizes = np.arange(min_leaf, n - min_leaf + 1)
        if len(left_sizes) == 0:
            continue
        distinct = xs[left_sizes - 1] < xs[left_sizes]
        left_sizes = left_sizes[distinct]
        if len(left_sizes) == 0:
            continue
        ls = left_sizes.astype(float)
        sum_l = csum[left_sizes - 1]
        sq_l = csq[left_sizes - 1]
        sse_l = sq_l - sum_l * sum_l / ls
        sum_r = csum[-1] - sum_l
        sq_r = csq[-1] - sq_l
        sse_r = sq_r - sum_r * sum_r / (n - ls)
        total = sse_l + sse_r
        k = int(np.argmin(total))
        if best is None or total[k] < best[0]:
            i = int(left_sizes[k])
            threshold = 0.5 * (xs[i - 1] + xs[i])
            best = (float(total[k]), int(j), threshold)
    if best is None:
        return None
    return best[1], best[2], best[0]


def _grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    depth: int,
    max_depth: int,
    min_leaf: int,
    m_features: int,
    rng: np.random.Generator,
):
    node_sse = float(np.sum((y - y.mean()) ** 2))
    if depth >= max_depth or len(y) < 2 * min_leaf or node_sse <= 0.0:
        return (float(y.mean()),)
    feat_idx = np.sort(rng.choice(X.shape[1], size=m_features, replace=False))
    split = _best_split(X, y, feat_idx, min_leaf)
    if split is None:
        return (float(y.mean()),)
    j, threshold, split_sse = split
    if split_sse >= node_sse:
        return (float(y.mean()),)
    mask = X[:, j] <= threshold
    left = _grow_tree(X[mask], y[mask], depth + 1, max_depth, min_leaf, m_features, rng)
    right = _grow_tree(X[~mask], y[~mask], depth + 1, max_depth, min_leaf, m_features, rng)
    return (int(j), float(threshold), left, right)


def _tree_predict(node, x: np.ndarray) -> float:
    while len(node) == 4:
        j, threshold, left, right = node
        node = left if x[j] <= threshold else right
    return node[0]


@dataclass
class ForestModel:
    columns: tuple[str, ...]
    trees: list
    seed: int

    def predict_rows(self, X: np.ndarray) -> np.ndarray:
        per_tree = self.predict_per_tree(X)
        return per_tree.mean(axis=0)

    def predict_per_tree(self, X: np.ndarray) -> np.ndarray:
        out = np.empty((len(self.trees), len(X)))
        for ti, tree in enumerate(self.trees):
            for ri in range(len(X)):
                out[ti, ri] = _tree_predict(tree, X[ri])
        return out


def fit_random_forest(
    train: TrainingSet,
    trees: int = 200,
    max_depth: int = 6,
    min_leaf: int = 10,
    features_per_split: float = 1.0 / 3.0,
    seed: int = 0,
) -> ForestModel:
    """Bagged CART regression trees; bit-reproducible for a fixed seed."""
    n, p = train.X.shape
    if n < 2 * min_leaf:
        raise ModelError(f"forest needs >= {2 * min_leaf} rows, got {n}")
    m_features = max(1, round(features_per_split * p))
    rng = np.random.Generator(np.random.PCG64(seed))
    grown = []
    for _ in range(trees):
        idx = rng.integers(0, n, size=n)
        grown.append(
            _grow_tree(train.X[idx], train.y[idx], 0, max_depth, min_leaf, m_features, rng)
        )
    return ForestModel(train.columns, grown, seed)


# -- prediction over a feature frame -------------------------------------------


def predict(
    model: RidgeModel | ForestModel,
    frame: FeatureFrame,
    rows: list[tuple[Date, str]],
    model_label: str | None = None,
) -> ScoreFrame:
    """Score the given (date, ticker) rows; rows missing any training column
    are skipped and logged. Raises if the frame lacks training columns entirely."""
    missing_cols = [c for c in model.columns if c not in frame.column_names()]
    if missing_cols:
        extra = [
            c for c in frame.column_names() if c not in model.columns
        ]
        raise ModelError(
            f"feature columns do not match training columns; "
            f"missing={missing_cols} extra={extra}"
        )
    kept_keys: list[tuple[Date, str]] = []
    kept_rows: list[list[float]] = []
    skipped = 0
    for day, ticker in rows:
        feats = []
        ok = True
        for name in model.columns:
            v = frame.get(name, day, ticker)
            if v is None:
                ok = False
                break
            feats.append(v)
        if not ok:
            skipped += 1
            continue
        kept_keys.append((day, ticker))
        kept_rows.append(feats)
    if skipped:
        logger.info("predict: skipped %d rows with absent features", skipped)
    out = ScoreFrame(model=model_label or "model", stage="raw")
    if kept_rows:
        scores = model.predict_rows(np.array(kept_rows, dtype=float))
        for key, s in zip(kept_keys, scores):
            out.values[key] = float(s)
    return out


# -- mock forecasters -----------------------------------------------------------


@dataclass
class MockRule:
    """Deterministic scoring rule: constant(c), echo_feature(col), or
    noisy_oracle(rho) emitting rho*z(truth) + sqrt(1-rho^2)*seeded noise."""

    name: str
    constant: float = 0.0
    column: str = ""
    rho: float = 0.0


def parse_mock_rule(text: str) -> MockRule:
    name, _, arg = text.partition(":")
    name = name.strip()
    if name == "constant":
        return MockRule("constant", constant=float(arg or 0.0))
    if name == "echo_feature":
        if not arg:
            raise ConfigError("echo_feature rule needs a column, e.g. echo_feature:mom_5")
        return MockRule("echo_feature", column=arg.strip())
    if name == "noisy_oracle":
        rho = float(arg) if arg else 0.5
        if not -1.0 <= rho <= 1.0:
            raise ConfigError(f"noisy_oracle rho must be in [-1, 1], got {rho}")
        return MockRule("noisy_oracle", rho=rho)
    raise ConfigError(f"unknown mock rule {text!r}")


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from string parts (never uses Python's hash())."""
    key = "|".join(str(p) for p in parts)
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def mock_scores(
    rule: MockRule,
    day: Date,
    tickers: tuple[str, ...],
    frame: FeatureFrame | None,
    returns: ReturnFrame | None,
    seed: int,
) -> dict[str, float]:
    """Scores for one date under a mock rule. Deterministic given seed."""
    if rule.name == "constant":
        return {t: rule.constant for t in tickers}
    if rule.name == "echo_feature":
        out = {}
        for t in tickers:
            v = frame.get(rule.column, day, t) if frame is not None else None
            if v is not None:
                out[t] = v
        return out
    # noisy_oracle: cross-sectionally standardized realized returns plus noise
    truth = np.zeros(len(tickers))
    if returns is not None:
        raw = np.array(
            [returns.get(t, day) if returns.has(t, day) else np.nan for t in tickers]
        )
        present = ~np.isnan(raw)
        if present.sum() >= 2:
            mu = raw[present].mean()
            sigma = raw[present].std(ddof=1)
            if sigma > 1e-12:
                truth[present] = (raw[present] - mu) / sigma
    rng = np.random.Generator(np.random.PCG64(derive_seed(seed, day.isoformat())))
    noise = rng.standard_normal(len(tickers))
    scores = rule.rho * truth + np.sqrt(1.0 - rule.rho**2) * noise
    return {t: float(s) for t, s in zip(tickers, scores)}
