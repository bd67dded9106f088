"""Experiment pipeline, recommendation reports and aggregation.

The validation protocol keeps optimization and evaluation strictly apart:
the classifier and indirect estimator that drive the optimizer are fit on
the training half; each tenth of the test half is optimized in turn and
scored by a fresh validation model fit only on the other nine tenths.
"""

from __future__ import annotations

import dataclasses
import json
import pathlib
import time
from dataclasses import dataclass, field

import numpy as np

from recourse.core import (
    BoundPolicy,
    ConfigError,
    CostBudgetSpec,
    FeaturePartition,
    effective_bounds,
)
from recourse.dataset import (
    DatasetSchema,
    apply_preprocess,
    fit_preprocess,
    load_csv,
    make_split,
)
from recourse.indirect import IndirectModel, estimate_indirect_batch, fit_indirect
from recourse.metrics import SupportIndex
from recourse.models import (
    model_from_json,
    model_to_json,
    select_logistic_ridge,
    select_svm_params,
    train_logistic,
    train_svm,
)
from recourse.optimizer import (
    OptimizerConfig,
    build_objective_batch,
    pgd_batch,
    sensitivity_search_batch,
)

BUNDLE_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one experiment needs, resolved from a JSON document."""

    dataset_path: str
    label_column: str
    id_column: str | None
    positive_label: float
    direct: tuple[str, ...]
    indirect: tuple[str, ...]
    unchangeable: tuple[str, ...]
    costs: dict
    bound_default: tuple[float, float]
    bound_per_feature: dict
    policy: BoundPolicy
    policy_overrides: dict
    model_type: str
    c_grid: tuple[float, ...]
    sigma_grid: tuple[float, ...]
    ridge_grid: tuple[float, ...]
    model_cv_folds: int
    indirect_sigma_grid: tuple[float, ...]
    indirect_cv_folds: int
    optimizer_method: str
    optimizer: OptimizerConfig
    budgets: tuple[float, ...]
    support_k: int
    seed: int
    swap_roles: bool = False

    def __post_init__(self):
        if not self.budgets:
            raise ConfigError("budget grid must be nonempty")
        if any(b < 0 for b in self.budgets):
            raise ConfigError("budgets must be nonnegative")
        if any(b2 <= b1 for b1, b2 in zip(self.budgets, self.budgets[1:])):
            raise ConfigError("budgets must be strictly increasing")
        if self.model_type not in ("logistic", "svm"):
            raise ConfigError(f"unknown model type {self.model_type!r}")
        if self.optimizer_method not in ("pgd", "sensitivity"):
            raise ConfigError(f"unknown optimizer {self.optimizer_method!r}")
        if not self.direct:
            raise ConfigError("the direct feature set must be nonempty")


def _parse_budgets(doc) -> tuple[float, ...]:
    if isinstance(doc, dict):
        start, stop, step = doc.get("start", 0), doc["stop"], doc.get("step", 1)
        if step <= 0:
            raise ConfigError("budget step must be positive")
        out, b = [], float(start)
        while b <= stop + 1e-12:
            out.append(round(b, 10))
            b += step
        return tuple(out)
    return tuple(float(b) for b in doc)


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    config = config_from_dict(doc)
    # a relative dataset path is tried against the working directory first,
    # then against the config file's own directory
    ds = pathlib.Path(config.dataset_path)
    if not ds.is_absolute() and not ds.exists():
        beside = pathlib.Path(path).resolve().parent / ds
        if beside.exists():
            config = dataclasses.replace(config, dataset_path=str(beside))
    return config


def config_from_dict(doc: dict) -> ExperimentConfig:
    try:
        ds = doc["dataset"]
        part = doc["partition"]
        model = doc.get("model", {})
        opt = doc.get("optimizer", {})
        bounds = doc.get("bounds", {})
        step = opt.get("step", "auto")
        opt_config = OptimizerConfig(
            step=step if isinstance(step, str) else float(step),
            max_iter=int(opt.get("max_iter", 1000)),
            tol=float(opt.get("tol", 1e-6)),
        )
        return ExperimentConfig(
            dataset_path=ds["path"],
            label_column=ds["label_column"],
            id_column=ds.get("id_column"),
            positive_label=float(ds.get("positive_label", 1)),
            direct=tuple(part["direct"]),
            indirect=tuple(part.get("indirect", ())),
            unchangeable=tuple(part.get("unchangeable", ())),
            costs=doc.get("costs", {}),
            bound_default=tuple(bounds.get("default", (0.0, 1.0))),
            bound_per_feature=bounds.get("per_feature", {}),
            policy=BoundPolicy(doc.get("policy", "hardline")),
            policy_overrides=doc.get("policy_overrides", {}),
            model_type=model.get("type", "logistic"),
            c_grid=tuple(model.get("c_grid", (1.0,))),
            sigma_grid=tuple(model.get("sigma_grid", (1.0,))),
            ridge_grid=tuple(model.get("ridge_grid", (1e-4,))),
            model_cv_folds=int(model.get("cv_folds", 5)),
            indirect_sigma_grid=tuple(
                doc.get("indirect_model", {}).get("sigma_grid", (0.5, 1.0, 2.0, 4.0))
            ),
            indirect_cv_folds=int(doc.get("indirect_model", {}).get("cv_folds", 5)),
            optimizer_method=opt.get("method", "pgd"),
            optimizer=opt_config,
            budgets=_parse_budgets(doc.get("budgets", (0.0,))),
            support_k=int(doc.get("support_k", 10)),
            seed=int(doc.get("seed", 0)),
            swap_roles=bool(doc.get("swap_roles", False)),
        )
    except KeyError as exc:
        raise ConfigError(f"config is missing required key {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad config value: {exc}") from None


@dataclass(frozen=True)
class ModelBundle:
    """A trained classifier, indirect estimator and the framing around them."""

    schema: DatasetSchema
    partition: FeaturePartition
    cost_up: np.ndarray
    cost_down: np.ndarray
    raw_lower: np.ndarray
    raw_upper: np.ndarray
    policy: BoundPolicy
    policy_overrides: tuple
    model: object
    indirect: IndirectModel | None
    X_train: np.ndarray
    support_k: int
    train_meta: dict = field(default_factory=dict)

    def cost_spec(self, budget: float, policy=None, cost_up=None, cost_down=None):
        return CostBudgetSpec(
            cost_up=self.cost_up if cost_up is None else cost_up,
            cost_down=self.cost_down if cost_down is None else cost_down,
            budget=budget,
            raw_lower=self.raw_lower,
            raw_upper=self.raw_upper,
            bound_policy=policy or self.policy,
            policy_overrides=self.policy_overrides or None,
        )

    def direct_names(self):
        return [self.schema.feature_columns[i] for i in self.partition.direct]

    def to_json(self) -> dict:
        return {
            "format_version": BUNDLE_FORMAT_VERSION,
            "schema": self.schema.to_json(),
            "partition": {
                "unchangeable": list(self.partition.unchangeable),
                "indirect": list(self.partition.indirect),
                "direct": list(self.partition.direct),
            },
            "cost_up": self.cost_up.tolist(),
            "cost_down": self.cost_down.tolist(),
            "raw_lower": self.raw_lower.tolist(),
            "raw_upper": self.raw_upper.tolist(),
            "policy": self.policy.value,
            "policy_overrides": [
                p.value if p is not None else None for p in self.policy_overrides
            ] if self.policy_overrides else [],
            "model": model_to_json(self.model),
            "indirect": self.indirect.to_json() if self.indirect else None,
            "X_train": self.X_train.tolist(),
            "support_k": self.support_k,
            "train_meta": self.train_meta,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ModelBundle":
        if doc.get("format_version") != BUNDLE_FORMAT_VERSION:
            raise ConfigError(
                f"unsupported bundle format {doc.get('format_version')!r}"
            )
        overrides = tuple(
            BoundPolicy(p) if p is not None else None
            for p in doc.get("policy_overrides", [])
        )
        return cls(
            schema=DatasetSchema.from_json(doc["schema"]),
            partition=FeaturePartition(
                unchangeable=tuple(doc["partition"]["unchangeable"]),
                indirect=tuple(doc["partition"]["indirect"]),
                direct=tuple(doc["partition"]["direct"]),
            ),
            cost_up=np.array(doc["cost_up"], dtype=float),
            cost_down=np.array(doc["cost_down"], dtype=float),
            raw_lower=np.array(doc["raw_lower"], dtype=float),
            raw_upper=np.array(doc["raw_upper"], dtype=float),
            policy=BoundPolicy(doc["policy"]),
            policy_overrides=overrides,
            model=model_from_json(doc["model"]),
            indirect=IndirectModel.from_json(doc["indirect"]) if doc["indirect"] else None,
            X_train=np.array(doc["X_train"], dtype=float),
            support_k=int(doc["support_k"]),
            train_meta=doc.get("train_meta", {}),
        )


def resolve_partition(config: ExperimentConfig, schema: DatasetSchema) -> FeaturePartition:
    names = set(config.direct) | set(config.indirect) | set(config.unchangeable)
    missing = [c for c in schema.feature_columns if c not in names]
    if missing:
        raise ConfigError(f"partition does not cover columns: {missing}")
    part = FeaturePartition(
        unchangeable=tuple(schema.feature_index(c) for c in config.unchangeable),
        indirect=tuple(schema.feature_index(c) for c in config.indirect),
        direct=tuple(schema.feature_index(c) for c in config.direct),
    )
    part.validate(schema.n_features)
    return part


def resolve_costs_bounds(config: ExperimentConfig):
    d = len(config.direct)
    cu = np.zeros(d)
    cd = np.zeros(d)
    lo = np.full(d, float(config.bound_default[0]))
    hi = np.full(d, float(config.bound_default[1]))
    for k, name in enumerate(config.direct):
        spec = config.costs.get(name, {})
        cu[k] = float(spec.get("up", 0.0))
        cd[k] = float(spec.get("down", 0.0))
        if name in config.bound_per_feature:
            lo[k], hi[k] = (float(v) for v in config.bound_per_feature[name])
    overrides = tuple(
        BoundPolicy(config.policy_overrides[name])
        if name in config.policy_overrides else None
        for name in config.direct
    )
    if all(o is None for o in overrides):
        overrides = ()
    return cu, cd, lo, hi, overrides


def _fit_model(config, X, y, seed):
    if config.model_type == "svm":
        C, sigma = select_svm_params(
            X, y, config.c_grid, config.sigma_grid,
            n_folds=config.model_cv_folds, seed=seed,
        )
        model = train_svm(X, y, C=C, sigma=sigma, seed=seed)
        return model, {"C": C, "sigma": sigma}
    ridge = select_logistic_ridge(
        X, y, config.ridge_grid, n_folds=config.model_cv_folds, seed=seed
    )
    return train_logistic(X, y, ridge=ridge), {"ridge": ridge}


def _refit_model(config, X, y, params, seed):
    """Refit with hyperparameters already chosen (validation-side models)."""
    if config.model_type == "svm":
        return train_svm(X, y, C=params["C"], sigma=params["sigma"], seed=seed)
    return train_logistic(X, y, ridge=params["ridge"])


def _fit_indirect_for(config, X, partition, seed):
    if not partition.indirect:
        return None
    D = list(partition.direct)
    U = list(partition.unchangeable)
    I = list(partition.indirect)
    return fit_indirect(
        X[:, D], X[:, U], X[:, I],
        sigma_grid=config.indirect_sigma_grid,
        cv_folds=config.indirect_cv_folds,
        seed=seed,
    )


def train_bundle(config: ExperimentConfig) -> ModelBundle:
    """Train the serving bundle on the training half of the dataset."""
    table = load_csv(config.dataset_path, config.id_column, config.label_column)
    split = make_split(table.n_rows, config.seed)
    train_table = table.subset(split.train_indices)
    schema = fit_preprocess(
        train_table, config.label_column, config.id_column, config.positive_label
    )
    partition = resolve_partition(config, schema)
    cu, cd, lo, hi, overrides = resolve_costs_bounds(config)
    X_train, y_train, _ = apply_preprocess(train_table, schema)
    model, params = _fit_model(config, X_train, y_train, config.seed + 1)
    indirect = _fit_indirect_for(config, X_train, partition, config.seed + 2)
    return ModelBundle(
        schema=schema,
        partition=partition,
        cost_up=cu,
        cost_down=cd,
        raw_lower=lo,
        raw_upper=hi,
        policy=config.policy,
        policy_overrides=overrides,
        model=model,
        indirect=indirect,
        X_train=X_train,
        support_k=config.support_k,
        train_meta={"params": params, "seed": config.seed, "n_train": len(X_train)},
    )


@dataclass
class RecommendationReport:
    """Outcome of inverse-classifying one instance at one budget."""

    instance_id: str
    budget: float
    deltas: dict                 # feature name -> normalized delta
    deltas_raw: dict             # feature name -> delta in original units
    effective_lower: dict
    effective_upper: dict
    cost_spent: float
    probability_before: float
    probability_after: float
    optimizer_probability_before: float
    optimizer_probability_after: float
    estimated_indirect: dict
    trace: dict
    support: dict | None = None

    def to_json(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "budget": self.budget,
            "deltas": self.deltas,
            "deltas_raw": self.deltas_raw,
            "effective_lower": self.effective_lower,
            "effective_upper": self.effective_upper,
            "cost_spent": self.cost_spent,
            "probability_before": self.probability_before,
            "probability_after": self.probability_after,
            "optimizer_probability_before": self.optimizer_probability_before,
            "optimizer_probability_after": self.optimizer_probability_after,
            "estimated_indirect": self.estimated_indirect,
            "trace": self.trace,
            "support": self.support,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "RecommendationReport":
        return cls(**doc)


@dataclass
class ExperimentResult:
    config_label: str
    budgets: tuple[float, ...]
    mean_validated_probability: list[float]
    mean_epsilon: list[float]
    mean_gamma: list[float]
    baseline_gamma: float
    reports: list[RecommendationReport]
    seconds: float

    def summary_rows(self):
        rows = []
        for j, b in enumerate(self.budgets):
            rows.append(
                {
                    "budget": b,
                    "mean_validated_probability": self.mean_validated_probability[j],
                    "mean_epsilon": self.mean_epsilon[j] if self.mean_epsilon else "",
                    "mean_gamma": self.mean_gamma[j] if self.mean_gamma else "",
                }
            )
        return rows


def run_pipeline(config: ExperimentConfig, collect_support: bool = True) -> ExperimentResult:
    """Split, fit, inverse-classify each held-out tenth, score with the
    validation model, and aggregate per-budget means."""
    t_start = time.time()
    table = load_csv(config.dataset_path, config.id_column, config.label_column)
    split = make_split(table.n_rows, config.seed)
    train_idx, test_idx = split.train_indices, split.test_indices
    if config.swap_roles:
        train_idx, test_idx = test_idx, train_idx
        n_test = len(test_idx)
        folds = tuple(i % 10 for i in range(n_test))
    else:
        folds = split.test_folds

    train_table = table.subset(train_idx)
    schema = fit_preprocess(
        train_table, config.label_column, config.id_column, config.positive_label
    )
    partition = resolve_partition(config, schema)
    X_train, y_train, _ = apply_preprocess(train_table, schema)
    test_table = table.subset(test_idx)
    X_test, y_test, test_ids = apply_preprocess(test_table, schema)
    if test_ids is None:
        test_ids = [str(i) for i in test_idx]

    model, params = _fit_model(config, X_train, y_train, config.seed + 1)
    indirect = _fit_indirect_for(config, X_train, partition, config.seed + 2)
    support_index = (
        SupportIndex(X_train, model, config.support_k) if collect_support else None
    )

    cu, cd, lo_raw, hi_raw, overrides = resolve_costs_bounds(config)
    budgets = np.array(config.budgets, dtype=float)
    n_b = budgets.shape[0]
    reports: list[RecommendationReport] = []
    fold_of = np.array(folds)

    for fold in sorted(set(folds)):
        in_fold = fold_of == fold
        Xf = X_test[in_fold]
        ids_f = [test_ids[i] for i in np.flatnonzero(in_fold)]
        m = Xf.shape[0]
        if m == 0:
            continue
        X_val = X_test[~in_fold]
        y_val = y_test[~in_fold]
        val_model = _refit_model(config, X_val, y_val, params, config.seed + 3)
        val_indirect = _fit_indirect_for(config, X_val, partition, config.seed + 4)

        reports.extend(
            _optimize_fold(
                config, schema, partition, model, indirect, val_model, val_indirect,
                support_index, Xf, ids_f, budgets, cu, cd, lo_raw, hi_raw, overrides,
            )
        )

    mean_prob, mean_eps, mean_gam = [], [], []
    for j, b in enumerate(config.budgets):
        at_b = [r for r in reports if r.budget == b]
        mean_prob.append(float(np.mean([r.probability_after for r in at_b])))
        if collect_support:
            mean_eps.append(float(np.mean([r.support["epsilon"] for r in at_b])))
            mean_gam.append(float(np.mean([r.support["gamma"] for r in at_b])))
    label = f"{config.model_type}+{config.optimizer_method}+{config.policy.value}"
    return ExperimentResult(
        config_label=label,
        budgets=config.budgets,
        mean_validated_probability=mean_prob,
        mean_epsilon=mean_eps,
        mean_gamma=mean_gam,
        baseline_gamma=support_index.baseline_gamma if support_index else float("nan"),
        reports=reports,
        seconds=time.time() - t_start,
    )


def _optimize_fold(
    config, schema, partition, model, indirect, val_model, val_indirect, support_index,
    Xf, ids_f, budgets, cu, cd, lo_raw, hi_raw, overrides,
):
    """Optimize every instance of one fold across the whole budget grid."""
    m = Xf.shape[0]
    n_b = budgets.shape[0]
    D = np.array(partition.direct, dtype=int)
    d = D.shape[0]

    base_spec = CostBudgetSpec(
        cost_up=cu, cost_down=cd, budget=0.0,
        raw_lower=lo_raw, raw_upper=hi_raw,
        bound_policy=config.policy,
        policy_overrides=overrides or None,
    )
    lo_eff = np.empty((m, d))
    hi_eff = np.empty((m, d))
    for i in range(m):
        lo_eff[i], hi_eff[i] = effective_bounds(Xf[i, D], base_spec)

    X_rep = np.repeat(Xf, n_b, axis=0)
    lo_rep = np.repeat(lo_eff, n_b, axis=0)
    hi_rep = np.repeat(hi_eff, n_b, axis=0)
    b_rep = np.tile(budgets, m)

    G, dG = build_objective_batch(model, indirect, X_rep, partition)
    if config.optimizer_method == "pgd":
        result = pgd_batch(
            G, dG, cu, cd, b_rep, lo_rep, hi_rep, config=config.optimizer
        )
    else:
        result = sensitivity_search_batch(G, cu, cd, b_rep, lo_rep, hi_rep)

    return _build_reports(
        config, schema, partition, model, indirect, val_model, val_indirect,
        support_index, Xf, ids_f, budgets, cu, cd, result, lo_eff, hi_eff, X_rep,
    )


def _assemble_optimized(X_rep, Z, partition, indirect):
    D = np.array(partition.direct, dtype=int)
    I = np.array(partition.indirect, dtype=int)
    U = np.array(partition.unchangeable, dtype=int)
    full = X_rep.copy()
    full[:, D] = X_rep[:, D] + Z
    est = None
    if indirect is not None and I.size:
        Q = np.hstack([full[:, D], full[:, U]])
        est, _ = estimate_indirect_batch(indirect, Q)
        full[:, I] = est
    return full, est


def _build_reports(
    config, schema, partition, model, indirect, val_model, val_indirect,
    support_index, Xf, ids_f, budgets, cu, cd, result, lo_eff, hi_eff, X_rep,
):
    m = Xf.shape[0]
    n_b = budgets.shape[0]
    direct_names = [schema.feature_columns[i] for i in partition.direct]
    indirect_names = [schema.feature_columns[i] for i in partition.indirect]
    spans = np.array(
        [schema.maxs[i] - schema.mins[i] for i in partition.direct], dtype=float
    )

    x_opt, est_opt = _assemble_optimized(X_rep, result.Z, partition, indirect)
    zero = np.zeros_like(result.Z)
    x_base_val, _ = _assemble_optimized(X_rep, zero, partition, val_indirect)
    x_opt_val, _ = _assemble_optimized(X_rep, result.Z, partition, val_indirect)
    prob_before_val = val_model.predict_prob_batch(x_base_val)
    prob_after_val = val_model.predict_prob_batch(x_opt_val)

    reports = []
    for i in range(m):
        for j in range(n_b):
            r = i * n_b + j
            z = result.Z[r]
            support = (
                support_index.support(x_opt[r]).to_json() if support_index else None
            )
            cost = float(cu @ np.maximum(z, 0.0) + cd @ np.maximum(-z, 0.0))
            estimated = (
                {name: float(est_opt[r, k]) for k, name in enumerate(indirect_names)}
                if est_opt is not None
                else {}
            )
            reports.append(
                RecommendationReport(
                    instance_id=str(ids_f[i]),
                    budget=float(budgets[j]),
                    deltas={n: float(z[k]) for k, n in enumerate(direct_names)},
                    deltas_raw={
                        n: float(z[k] * spans[k]) for k, n in enumerate(direct_names)
                    },
                    effective_lower={
                        n: float(lo_eff[i, k]) for k, n in enumerate(direct_names)
                    },
                    effective_upper={
                        n: float(hi_eff[i, k]) for k, n in enumerate(direct_names)
                    },
                    cost_spent=cost,
                    probability_before=float(prob_before_val[r]),
                    probability_after=float(prob_after_val[r]),
                    optimizer_probability_before=float(result.g_initial[r]),
                    optimizer_probability_after=float(result.g_final[r]),
                    estimated_indirect=estimated,
                    trace={
                        "iterations": int(result.iterations[r]),
                        "termination": result.reasons[r].value,
                    },
                    support=support,
                )
            )
    return reports


def normalize_values(bundle: ModelBundle, values: dict) -> np.ndarray:
    """Map a name -> raw value dict onto the normalized feature vector.

    Missing indirect features default to their training mean (they get
    re-estimated anyway); any other missing feature is an error.
    """
    schema = bundle.schema
    x = np.empty(schema.n_features)
    indirect_set = set(bundle.partition.indirect)
    for k, name in enumerate(schema.feature_columns):
        if name in values:
            raw = float(values[name])
        elif k in indirect_set:
            raw = schema.means[k]
        else:
            raise ConfigError(f"missing value for feature {name!r}")
        lo, hi = schema.mins[k], schema.maxs[k]
        x[k] = np.clip((raw - lo) / (hi - lo), 0.0, 1.0) if hi > lo else 0.0
    return x


def recommend_one(
    bundle: ModelBundle,
    values: dict,
    budget: float,
    optimizer: str = "pgd",
    policy: BoundPolicy | None = None,
    cost_overrides: dict | None = None,
    optimizer_config: OptimizerConfig | None = None,
    instance_id: str = "adhoc",
    with_support: bool = True,
    support_index: SupportIndex | None = None,
) -> RecommendationReport:
    """Inverse-classify a single instance against a trained bundle.

    The bundle model plays both the optimization and the reporting role
    here; validated probabilities only exist inside the experiment pipeline.
    """
    from recourse.core import Instance
    from recourse.optimizer import build_objective, pgd, sensitivity_search
    from recourse.projection import FeasibleSetSpec

    if budget < 0:
        raise ConfigError("budget must be nonnegative")
    if optimizer not in ("pgd", "sensitivity"):
        raise ConfigError(f"unknown optimizer {optimizer!r}")
    x = normalize_values(bundle, values)
    schema = bundle.schema
    partition = bundle.partition
    cu = np.array(bundle.cost_up)
    cd = np.array(bundle.cost_down)
    if cost_overrides:
        names = bundle.direct_names()
        for name, sides in cost_overrides.items():
            if name not in names:
                raise ConfigError(f"cost override for non-direct feature {name!r}")
            k = names.index(name)
            if "up" in sides:
                cu[k] = float(sides["up"])
            if "down" in sides:
                cd[k] = float(sides["down"])
    cost_spec = bundle.cost_spec(budget, policy=policy, cost_up=cu, cost_down=cd)
    D = np.array(partition.direct, dtype=int)
    lo_eff, hi_eff = effective_bounds(x[D], cost_spec)
    feas = FeasibleSetSpec(cu, cd, budget, lo_eff, hi_eff)

    inst = Instance(x, id=instance_id)
    g, grad_g = build_objective(bundle.model, bundle.indirect, inst, partition)
    if optimizer == "pgd":
        z, trace = pgd(g, grad_g, feas, optimizer_config or OptimizerConfig())
    else:
        z, trace = sensitivity_search(g, feas)

    full, est = _assemble_optimized(x[None, :], z[None, :], partition, bundle.indirect)
    direct_names = bundle.direct_names()
    indirect_names = [schema.feature_columns[i] for i in partition.indirect]
    spans = np.array([schema.maxs[i] - schema.mins[i] for i in D], dtype=float)
    support = None
    if with_support:
        idx = support_index or SupportIndex(
            bundle.X_train, bundle.model, bundle.support_k
        )
        support = idx.support(full[0]).to_json()
    return RecommendationReport(
        instance_id=instance_id,
        budget=float(budget),
        deltas={n: float(z[k]) for k, n in enumerate(direct_names)},
        deltas_raw={n: float(z[k] * spans[k]) for k, n in enumerate(direct_names)},
        effective_lower={n: float(lo_eff[k]) for k, n in enumerate(direct_names)},
        effective_upper={n: float(hi_eff[k]) for k, n in enumerate(direct_names)},
        cost_spent=change_cost_value(z, cu, cd),
        probability_before=trace.records[0].g,
        probability_after=trace.records[-1].g,
        optimizer_probability_before=trace.records[0].g,
        optimizer_probability_after=trace.records[-1].g,
        estimated_indirect=(
            {n: float(est[0, k]) for k, n in enumerate(indirect_names)}
            if est is not None else {}
        ),
        trace=trace.summary(),
        support=support,
    )


def change_cost_value(z, cu, cd) -> float:
    return float(cu @ np.maximum(z, 0.0) + cd @ np.maximum(-z, 0.0))


def frequency_table(reports, budget: float, threshold: float = 1e-6):
    """Rank features by how often they were changed at the given budget.

    The normalized share divides by how many instances could have moved that
    feature in the direction it was (predominantly) moved: an instance is
    eligible for a decrease when its effective lower bound is below zero and
    for an increase when its upper bound is above zero.
    """
    at_b = [r for r in reports if r.budget == budget]
    if not at_b:
        return []
    features = list(at_b[0].deltas.keys())
    out = []
    for name in features:
        deltas = np.array([r.deltas[name] for r in at_b])
        changed = np.abs(deltas) > threshold
        count = int(changed.sum())
        if count == 0:
            continue
        direction = 1.0 if deltas[changed].mean() > 0 else -1.0
        if direction > 0:
            eligible = sum(1 for r in at_b if r.effective_upper[name] > 1e-12)
        else:
            eligible = sum(1 for r in at_b if r.effective_lower[name] < -1e-12)
        share = count / eligible if eligible else 0.0
        out.append(
            {
                "feature": name,
                "count": count,
                "share": share,
                "direction": "increase" if direction > 0 else "decrease",
                "eligible": eligible,
            }
        )
    out.sort(key=lambda row: (-row["count"], features.index(row["feature"])))
    return out
