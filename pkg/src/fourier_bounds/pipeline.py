"""Experiment pipeline: dataset generation with sample filtering, reference prices,
surrogate training, accuracy evaluation over error tolerances, and timing."""

from __future__ import annotations

import csv
import logging
import math
import statistics
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .bounds import BoundValues, integral_root_i_s, moment_root_mu_n
from .carr_madan import (
    REFERENCE_TUNING,
    RULE_OF_THUMB,
    CarrMadanTuning,
    damping_admissible,
    first_admissible_alpha,
    optimal_tuning_search,
    price_call_cm,
)
from .cos import CosTuning, num_terms, price_cos, truncation_range, tuning_from_bounds
from .exceptions import FourierBoundsError, ModelFormatError
from .heston import (
    FEATURE_NAMES,
    HestonParams,
    MarketContext,
    OptionSpec,
    clear_mu_cache,
    expected_log_price,
    feller_holds,
)
from .surrogates import (
    SurrogateBundle,
    TrainedSurrogate,
    fit_forest,
    fit_mlp,
    fit_tree,
    load_shipped_tree,
)

__all__ = [
    "PARAMETER_RANGES",
    "STATUSES",
    "CSV_COLUMNS",
    "DEFAULT_EPS_LIST",
    "Sample",
    "EvalReport",
    "draw_features",
    "process_sample",
    "generate_dataset",
    "reference_price",
    "cos_price_from_bounds",
    "write_dataset",
    "read_dataset",
    "kept",
    "split_dataset",
    "feature_matrix",
    "train_surrogate",
    "shipped_sdt",
    "evaluate_accuracy",
    "benchmark_timing",
    "evaluate_cm",
]

log = logging.getLogger(__name__)

PARAMETER_RANGES = {
    "kappa": (1e-3, 10.0),
    "theta": (1e-3, 2.0),
    "xi": (1e-2, 5.0),
    "rho": (-0.99, 0.99),
    "v0": (1e-3, 2.0),
    "T": (1.0 / 250.0, 10.0),
}

STATUSES = ("kept", "excluded-feller", "excluded-moment", "excluded-unstable")

CSV_COLUMNS = ("kappa", "theta", "xi", "rho", "v0", "T", "mu8", "i20", "ref_price", "cm_alpha",
               "cm_n", "status")

DEFAULT_EPS_LIST = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7)

REFERENCE_EPS = 1e-9
AGREEMENT_TOL = 1e-7
MOMENT_ORDER = 8
INTEGRAL_ORDER = 20


@dataclass(frozen=True)
class Sample:
    """One row of the experimental dataset."""

    features: tuple
    mu8: float | None = None
    i20: float | None = None
    ref_price: float | None = None
    cm_alpha: float | None = None
    cm_n: int | None = None
    status: str = "kept"

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")
        if len(self.features) != len(FEATURE_NAMES):
            raise ValueError("a sample has six features")
        if self.status == "kept" and None in (self.mu8, self.i20, self.ref_price):
            raise ValueError("kept samples need mu8, i20 and ref_price")

    @property
    def params(self) -> HestonParams:
        return HestonParams(*self.features[:5])

    @property
    def maturity(self) -> float:
        return self.features[5]

    def bounds(self) -> BoundValues:
        return BoundValues(self.mu8, MOMENT_ORDER, self.i20, INTEGRAL_ORDER)


def draw_features(rng, ranges=PARAMETER_RANGES) -> tuple:
    """One uniform draw of (kappa, theta, xi, rho, v0, T) from ``ranges``."""
    lo = np.array([ranges[name][0] for name in FEATURE_NAMES])
    hi = np.array([ranges[name][1] for name in FEATURE_NAMES])
    return tuple(float(v) for v in rng.uniform(lo, hi))


def cos_price_from_bounds(bounds: BoundValues, eps, spec: OptionSpec, params, mkt) -> float:
    tuning = tuning_from_bounds(eps, bounds, spec.strike, mkt.r, spec.maturity)
    return price_cos(spec, tuning, params, mkt)


def reference_price(sample: Sample, spec: OptionSpec, mkt: MarketContext, *, cross_check=True,
                    eps=REFERENCE_EPS):
    """COS price at ``eps`` with the sample's direct bounds, optionally confirmed by Carr-Madan.

    The cross-check prices the call with M=1024, N=2^20 and the first
    admissible damping factor of the grid (puts via parity). Returns
    ``(price, status, difference)``; status is "excluded-unstable" when
    pricing fails or the two methods differ by more than 1e-7.
    """
    params, t = sample.params, sample.maturity
    spec = replace(spec, maturity=t)
    try:
        price = cos_price_from_bounds(sample.bounds(), eps, spec, params, mkt)
    except (FourierBoundsError, ValueError, OverflowError) as exc:
        log.info("reference COS price failed: %s", exc)
        return None, "excluded-unstable", None
    if not math.isfinite(price):
        return None, "excluded-unstable", None
    if not cross_check:
        return price, "kept", None
    try:
        alpha = first_admissible_alpha(t, params, mkt)
        call = price_call_cm(replace(spec, kind="call"), CarrMadanTuning(alpha, **REFERENCE_TUNING),
                             params, mkt)
    except FourierBoundsError as exc:
        log.info("Carr-Madan cross-check failed: %s", exc)
        return None, "excluded-unstable", None
    other = call if spec.kind == "call" else call - mkt.s0 + spec.strike * math.exp(-mkt.r * t)
    diff = abs(other - price)
    if not diff <= AGREEMENT_TOL:
        return None, "excluded-unstable", diff
    return price, "kept", diff


def process_sample(features, spec: OptionSpec, mkt: MarketContext, *, cross_check=True,
                   with_cm=False, cm_target=1e-7) -> Sample:
    """Filter one parameter draw and compute its bound inputs and reference price."""
    params = HestonParams(*features[:5])
    t = features[5]
    if not feller_holds(params):
        return Sample(features, status="excluded-feller")
    try:
        mu8 = moment_root_mu_n(MOMENT_ORDER, t, params, mkt)
    except FourierBoundsError as exc:
        log.debug("moment unavailable: %s", exc)
        return Sample(features, status="excluded-moment")
    try:
        i20 = integral_root_i_s(INTEGRAL_ORDER, t, params, mkt)
    except FourierBoundsError as exc:
        log.info("I_s failed: %s", exc)
        return Sample(features, mu8=mu8, status="excluded-unstable")
    sample = Sample(features, mu8=mu8, i20=i20, status="excluded-unstable")
    price, status, _ = reference_price(sample, spec, mkt, cross_check=cross_check)
    if status != "kept":
        return sample
    cm_alpha = cm_n = None
    if with_cm:
        call_spec = OptionSpec(spec.strike, t, "call")
        ref_call = price if spec.kind == "call" else price + mkt.s0 - spec.strike * math.exp(-mkt.r * t)
        try:
            cm_alpha, cm_n = optimal_tuning_search(call_spec, params, mkt, ref_call, cm_target)
        except FourierBoundsError as exc:
            log.info("no Carr-Madan optimum: %s", exc)
    return Sample(features, mu8, i20, price, cm_alpha, cm_n, "kept")


def generate_dataset(count, seed, ranges=PARAMETER_RANGES, *, spec: OptionSpec | None = None,
                     mkt: MarketContext | None = None, cross_check=True, with_cm=False,
                     until_kept=False, progress=None) -> list:
    """Draw parameter sets uniformly from ``ranges`` and classify them.

    With ``until_kept`` false, exactly ``count`` draws are made (every
    status appears in the output); otherwise draws continue until ``count``
    samples are kept and only kept samples are returned. Draws come from a
    single seeded stream, so both modes see the same parameter sequence.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    spec = spec or OptionSpec(100.0, 1.0, "call")
    mkt = mkt or MarketContext(100.0, 0.0)
    rng = np.random.default_rng(seed)
    out, n_kept, n_draws = [], 0, 0
    while (n_kept if until_kept else n_draws) < count:
        features = draw_features(rng, ranges)
        n_draws += 1
        sample = process_sample(features, spec, mkt, cross_check=cross_check, with_cm=with_cm)
        if sample.status == "kept":
            n_kept += 1
        if sample.status == "kept" or not until_kept:
            out.append(sample)
        if progress is not None:
            progress(n_draws, n_kept)
    return out


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_dataset(samples, path):
    """CSV with a header row; floats at full round-trip precision, blanks for missing."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for s in samples:
            w.writerow([_fmt(v) for v in s.features]
                       + [_fmt(s.mu8), _fmt(s.i20), _fmt(s.ref_price), _fmt(s.cm_alpha),
                          _fmt(s.cm_n), s.status])


def read_dataset(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ModelFormatError(f"{path}: empty dataset file") from None
        if tuple(h.strip() for h in header) != CSV_COLUMNS:
            raise ModelFormatError(f"{path}: expected header {','.join(CSV_COLUMNS)}")
        out = []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(CSV_COLUMNS):
                raise ModelFormatError(f"{path}:{line_no}: expected {len(CSV_COLUMNS)} fields")
            try:
                num = [None if v == "" else float(v) for v in row[:11]]
                out.append(Sample(tuple(num[:6]), num[6], num[7], num[8], num[9],
                                  None if num[10] is None else int(num[10]), row[11]))
            except (TypeError, ValueError) as exc:
                raise ModelFormatError(f"{path}:{line_no}: {exc}") from None
    return out


def kept(samples):
    return [s for s in samples if s.status == "kept"]


def split_dataset(samples, n_train, n_test=None):
    """First ``n_train`` kept samples for training, the next ``n_test`` for testing."""
    ks = kept(samples)
    if n_test is None:
        n_test = len(ks) - n_train
    if n_train + n_test > len(ks):
        raise ValueError(f"need {n_train + n_test} kept samples, have {len(ks)}")
    return ks[:n_train], ks[n_train:n_train + n_test]


def feature_matrix(samples) -> np.ndarray:
    return np.array([s.features for s in samples], dtype=float)


def _targets(samples, target):
    if target == "mu8":
        return np.array([s.mu8 for s in samples])
    if target == "i20":
        return np.array([s.i20 for s in samples])
    raise ValueError(f"unknown target {target!r}")


# Desk-scale hyperparameters per model family.
DEFAULT_HYPERPARAMETERS = {
    "tree": {"max_depth": 30, "min_node_size": 6},
    "forest": {"num_trees": 100, "max_depth": None, "min_node_size": 5, "features_per_split": 2},
    "mlp": {"hidden": (64, 32), "activation": "sigmoid", "epochs": 100, "batch_size": 32,
            "learning_rate": 1e-3, "validation_split": 0.2},
}


def _fit(kind, X, y, seed, hyper):
    if kind not in DEFAULT_HYPERPARAMETERS:
        raise ValueError(f"unknown model kind {kind!r}")
    params = {**DEFAULT_HYPERPARAMETERS[kind], **(hyper or {})}
    if kind == "tree":
        return fit_tree(X, y, seed=seed, **params)
    if kind == "forest":
        return fit_forest(X, y, seed=seed, **params)
    return fit_mlp(X, y, seed=seed, **params)


def train_surrogate(samples, target, kind, *, seed=0, hyper=None):
    """Fit one surrogate on kept samples.

    ``target`` is "mu8", "i20" or "cm". The Carr-Madan target yields a
    bundle of two models: ``alpha`` and ``n``, the latter fitted on log N.
    """
    ks = kept(samples)
    if target == "cm":
        ks = [s for s in ks if s.cm_alpha is not None and s.cm_n is not None]
        if not ks:
            raise ValueError("no samples with Carr-Madan optima; generate with with_cm=True")
        X = feature_matrix(ks)
        alpha = TrainedSurrogate(_fit(kind, X, np.array([s.cm_alpha for s in ks]), seed, hyper),
                                 target="cm_alpha")
        n = TrainedSurrogate(_fit(kind, X, np.log([float(s.cm_n) for s in ks]), seed, hyper),
                             target="cm_n", transform="log")
        return SurrogateBundle({"alpha": alpha, "n": n}, target="cm", meta={"kind": kind})
    if not ks:
        raise ValueError("no kept samples to train on")
    X = feature_matrix(ks)
    model = _fit(kind, X, _targets(ks, target), seed, hyper)
    return TrainedSurrogate(model, target=target, meta={"kind": kind})


def shipped_sdt():
    """The shipped depth-5 trees as a (mu8, i20) surrogate pair."""
    return (TrainedSurrogate(load_shipped_tree("mu8"), target="mu8", meta={"kind": "tree"}),
            TrainedSurrogate(load_shipped_tree("i20"), target="i20", meta={"kind": "tree"}))


@dataclass
class EvalReport:
    """Percentages of test samples priced within each tolerance, per method."""

    eps_list: tuple
    accuracy: dict = field(default_factory=dict)      # method -> {eps: percent}
    n_samples: dict = field(default_factory=dict)     # method -> evaluated sample count
    failures: dict = field(default_factory=dict)      # method -> pricing failures
    timings: dict = field(default_factory=dict)       # stage -> mean seconds per sample

    def rows(self):
        out = []
        for method, acc in self.accuracy.items():
            for eps in self.eps_list:
                out.append({"method": method, "eps": eps, "percent": acc[eps],
                            "n": self.n_samples[method], "failures": self.failures[method]})
        return out

    def to_dict(self):
        return {"eps_list": list(self.eps_list),
                "accuracy": {m: {repr(e): p for e, p in acc.items()}
                             for m, acc in self.accuracy.items()},
                "n_samples": self.n_samples, "failures": self.failures, "timings": self.timings}


def _predicted_bounds(models, X):
    mu_model, i_model = models
    return np.asarray(mu_model.predict(X), dtype=float), np.asarray(i_model.predict(X), dtype=float)


def evaluate_accuracy(models, samples, spec: OptionSpec, mkt: MarketContext,
                      eps_list=DEFAULT_EPS_LIST, *, include_direct=True) -> EvalReport:
    """Accuracy of COS prices whose L and N come from true or predicted bounds.

    ``models`` maps a method name to a ``(mu8_model, i20_model)`` pair. The
    "direct-mu8" method uses the sample's stored bounds; "direct-mu4" uses
    the order-4 moment root with the stored I_20. A pricing failure counts
    as inaccurate.
    """
    eps_list = tuple(eps_list)
    report = EvalReport(eps_list)
    if not eps_list:
        return report
    test = kept(samples)
    X = feature_matrix(test)
    bound_sets = {}
    if include_direct:
        mu4 = []
        for s in test:
            try:
                mu4.append(moment_root_mu_n(4, s.maturity, s.params, mkt))
            except FourierBoundsError:
                mu4.append(math.nan)
        bound_sets["direct-mu4"] = (np.array(mu4), np.array([s.i20 for s in test]), 4)
        bound_sets["direct-mu8"] = (np.array([s.mu8 for s in test]),
                                    np.array([s.i20 for s in test]), MOMENT_ORDER)
    for name, pair in models.items():
        mu, i_s = _predicted_bounds(pair, X)
        bound_sets[name] = (mu, i_s, MOMENT_ORDER)

    for name, (mu, i_s, n) in bound_sets.items():
        hits = dict.fromkeys(eps_list, 0)
        failures = 0
        for j, s in enumerate(test):
            sspec = replace(spec, maturity=s.maturity)
            for eps in eps_list:
                try:
                    b = BoundValues(float(mu[j]), n, float(i_s[j]), INTEGRAL_ORDER)
                    price = cos_price_from_bounds(b, eps, sspec, s.params, mkt)
                except (FourierBoundsError, ValueError, OverflowError) as exc:
                    failures += 1
                    log.info("%s: pricing failed for sample %d at eps=%g: %s", name, j, eps, exc)
                    continue
                if abs(price - s.ref_price) <= eps:
                    hits[eps] += 1
        report.accuracy[name] = {e: 100.0 * hits[e] / len(test) if test else 0.0 for e in eps_list}
        report.n_samples[name] = len(test)
        report.failures[name] = failures
    return report


def _median_time(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def benchmark_timing(samples, spec: OptionSpec, mkt: MarketContext, eps=1e-7, *, models=None,
                     repeats=5) -> dict:
    """Median-of-``repeats`` wall-clock seconds per sample for each stage.

    Stages: direct bound computation (mu_8 and I_20), batched prediction
    by each surrogate pair in ``models``, and COS pricing at ``eps`` with
    the truncation range from mu_8 and from mu_4. Speedups of each
    surrogate over the direct bounds and of mu_8 over mu_4 pricing are
    included. The E[log S_T] cache is cleared before every direct run.
    """
    test = kept(samples)
    if not test:
        raise ValueError("no kept samples to time")
    n = len(test)
    X = feature_matrix(test)

    def direct():
        clear_mu_cache()
        for s in test:
            moment_root_mu_n(MOMENT_ORDER, s.maturity, s.params, mkt)
            integral_root_i_s(INTEGRAL_ORDER, s.maturity, s.params, mkt)

    out = {"n_samples": n, "eps": eps, "direct_bounds": _median_time(direct, repeats) / n}
    for name, pair in (models or {}).items():
        t = _median_time(lambda: _predicted_bounds(pair, X), repeats) / n
        out[f"{name}_bounds"] = t
        out[f"speedup_{name}"] = out["direct_bounds"] / t if t > 0 else math.inf

    # tunings are prepared outside the timed region; pricing only
    tunings = {"mu8": [], "mu4": []}
    usable = []
    for s in test:
        try:
            mu4 = moment_root_mu_n(4, s.maturity, s.params, mkt)
        except FourierBoundsError:
            continue
        expected_log_price(s.maturity, s.params, mkt)
        usable.append(s)
        for key, mu, order in (("mu8", s.mu8, MOMENT_ORDER), ("mu4", mu4, 4)):
            L = truncation_range(eps, mu, order, spec.strike, mkt.r, s.maturity)
            N = num_terms(eps, s.i20, INTEGRAL_ORDER, L, spec.strike, mkt.r, s.maturity)
            tunings[key].append((L, N))

    def pricing(key):
        for s, (L, N) in zip(usable, tunings[key]):
            price_cos(replace(spec, maturity=s.maturity), CosTuning(L, N), s.params, mkt)

    if usable:
        for key in ("mu8", "mu4"):
            out[f"cos_{key}"] = _median_time(lambda: pricing(key), repeats) / len(usable)
        out["cos_speedup_mu8_over_mu4"] = out["cos_mu4"] / out["cos_mu8"]
        out["mean_terms_mu8"] = float(np.mean([N for _, N in tunings["mu8"]]))
        out["mean_terms_mu4"] = float(np.mean([N for _, N in tunings["mu4"]]))
    out["noop"] = _median_time(lambda: None, repeats)
    return out


def evaluate_cm(bundle, samples, mkt: MarketContext, *, strike=100.0, target=1e-7,
                upper_limit=1200.0) -> dict:
    """Share of samples (in percent) on which Carr-Madan meets ``target``.

    Rows: the surrogate's (alpha, N), the doubled grid (alpha, 2N), and the
    fixed rule of thumb (alpha=1.95, M=1024, N=2^12). Predicted N is rounded
    up to an even integer; an inadmissible predicted alpha counts as a miss.
    Only samples with a stored optimum are scored, since the others have no
    training target.
    """
    test = [s for s in kept(samples) if s.cm_n is not None]
    if not test:
        raise ValueError("no kept samples with Carr-Madan optima")
    pred = bundle.predict(feature_matrix(test))
    hits = {"surrogate": 0, "surrogate_2n": 0, "rule_of_thumb": 0}
    for j, s in enumerate(test):
        spec = OptionSpec(strike, s.maturity, "call")
        n_hat = max(2, 2 * math.ceil(float(pred["n"][j]) / 2.0))
        alpha = float(pred["alpha"][j])
        trials = (("surrogate", alpha, upper_limit, n_hat),
                  ("surrogate_2n", alpha, upper_limit, 2 * n_hat),
                  ("rule_of_thumb", RULE_OF_THUMB.alpha, RULE_OF_THUMB.upper_limit,
                   RULE_OF_THUMB.grid_points))
        for key, a, m, n in trials:
            try:
                if not damping_admissible(a, s.maturity, s.params, mkt):
                    continue
                price = price_call_cm(spec, CarrMadanTuning(a, m, n), s.params, mkt)
            except (FourierBoundsError, ValueError):
                continue
            if abs(price - s.ref_price) <= target:
                hits[key] += 1
    return {k: 100.0 * v / len(test) for k, v in hits.items()} | {"n_samples": len(test)}
