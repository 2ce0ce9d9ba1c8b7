"""Command line front end.

Subcommands mirror the library workflows: ``train`` fits a model and saves
it as JSON, ``gap`` prices a dataset modification against a saved model,
``loocv``/``stepwise``/``tightness`` run the screening workflows and write
reports, and ``synth`` generates reproducible classification data for
experiments.  All reports embed the configuration they were produced with
and a SHA-256 content hash of the (post-preprocessing) input data.
"""

from __future__ import annotations

import csv
import functools
import hashlib
import json
import os
import sys

import click
import numpy as np
from scipy import sparse

from . import bounds, convex, data, erm, gapfast, plots, workflows
from .errors import ConfigError, GlruError, ValidationError

MODEL_FORMAT = "glru-model/1"
REPORT_FORMAT = "glru-report/1"

_CLASSIFICATION_LOSSES = ("logistic", "squared_hinge", "smoothed_hinge")


# ---------------------------------------------------------------------------
# hashing and (de)serialization helpers


def dataset_hash(ds: data.Dataset) -> str:
    """SHA-256 over the dataset contents after preprocessing.

    The hash covers the shape, the labels, and the stored matrix (including
    the sparsity structure for sparse storage), so a model saved by ``train``
    can later refuse to be paired with data that does not match.
    """
    h = hashlib.sha256()
    h.update(np.int64(ds.n).tobytes())
    h.update(np.int64(ds.d).tobytes())
    h.update(np.ascontiguousarray(ds.y, dtype=np.float64).tobytes())
    if ds.is_sparse:
        x = ds.x.tocsr()
        h.update(x.indptr.astype(np.int64).tobytes())
        h.update(x.indices.astype(np.int64).tobytes())
        h.update(np.ascontiguousarray(x.data, dtype=np.float64).tobytes())
    else:
        h.update(np.ascontiguousarray(ds.x, dtype=np.float64).tobytes())
    return h.hexdigest()


def save_model(path, model, loss, reg, preprocess, data_hash):
    payload = {
        "format": MODEL_FORMAT,
        "loss": {"kind": loss.kind, "gamma": loss.gamma},
        "reg": {
            "kind": reg.kind,
            "lam": reg.lam,
            "kappa": reg.kappa,
            "intercept": reg.intercept,
            "dim": reg.dim,
        },
        "w": model.w.tolist(),
        "alpha": model.alpha.tolist(),
        "cache": {
            "xw": model.cache.xw.tolist(),
            "xt_alpha": model.cache.xt_alpha.tolist(),
            "loss_sum": model.cache.loss_sum,
            "reg_sum": model.cache.reg_sum,
            "loss_conj_sum": model.cache.loss_conj_sum,
            "reg_conj_sum": model.cache.reg_conj_sum,
        },
        "relative_gap": model.relative_gap_at_stop,
        "preprocess": preprocess,
        "data_hash": data_hash,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_model(path):
    """Read a model saved by ``save_model``.

    Returns ``(model, loss, reg, preprocess, data_hash)``.  The caller is
    responsible for checking the hash against the dataset it pairs with.
    """
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError("cannot read model file %s: %s" % (path, exc))
    if payload.get("format") != MODEL_FORMAT:
        raise ValidationError("%s is not a %s file" % (path, MODEL_FORMAT))
    loss = convex.LossSpec(payload["loss"]["kind"], gamma=payload["loss"]["gamma"])
    r = payload["reg"]
    reg = convex.RegSpec(r["kind"], r["lam"], kappa=r["kappa"], intercept=r["intercept"], dim=r["dim"])
    c = payload["cache"]
    cache = erm.PrecomputeCache(
        xw=np.asarray(c["xw"], dtype=np.float64),
        xt_alpha=np.asarray(c["xt_alpha"], dtype=np.float64),
        loss_sum=c["loss_sum"],
        reg_sum=c["reg_sum"],
        loss_conj_sum=c["loss_conj_sum"],
        reg_conj_sum=c["reg_conj_sum"],
    )
    model = erm.TrainedModel(
        w=np.asarray(payload["w"], dtype=np.float64),
        alpha=np.asarray(payload["alpha"], dtype=np.float64),
        cache=cache,
        relative_gap_at_stop=payload["relative_gap"],
        loss=loss,
        reg=reg,
    )
    return model, loss, reg, payload["preprocess"], payload["data_hash"]


# ---------------------------------------------------------------------------
# report schema validation

_TYPE_CHECKS = {
    "object": lambda v: isinstance(v, dict),
    "array": lambda v: isinstance(v, list),
    "string": lambda v: isinstance(v, str),
    "number": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
    "integer": lambda v: isinstance(v, int) and not isinstance(v, bool),
    "boolean": lambda v: isinstance(v, bool),
    "null": lambda v: v is None,
}


def _check_schema(value, schema, where):
    types = schema.get("type")
    if types is not None:
        if isinstance(types, str):
            types = [types]
        if not any(_TYPE_CHECKS[t](value) for t in types):
            raise ValidationError("%s: expected %s" % (where, "/".join(types)))
    if "enum" in schema and value not in schema["enum"]:
        raise ValidationError("%s: %r not one of %r" % (where, value, schema["enum"]))
    if "oneOf" in schema:
        matches = 0
        for sub in schema["oneOf"]:
            try:
                _check_schema(value, sub, where)
                matches += 1
            except ValidationError:
                pass
        if matches != 1:
            raise ValidationError("%s: matched %d of the oneOf branches" % (where, matches))
    if isinstance(value, dict):
        for key in schema.get("required", ()):
            if key not in value:
                raise ValidationError("%s: missing key %r" % (where, key))
        props = schema.get("properties", {})
        if schema.get("additionalProperties") is False:
            extra = set(value) - set(props)
            if extra:
                raise ValidationError("%s: unexpected keys %s" % (where, sorted(extra)))
        for key, sub in props.items():
            if key in value:
                _check_schema(value[key], sub, "%s.%s" % (where, key))
    if isinstance(value, list) and "items" in schema:
        for i, item in enumerate(value):
            _check_schema(item, schema["items"], "%s[%d]" % (where, i))


def report_schema() -> dict:
    path = os.path.join(os.path.dirname(__file__), "schemas", "report.schema.json")
    with open(path) as fh:
        return json.load(fh)


def validate_report(payload) -> None:
    """Check a report envelope against the shipped schema."""
    _check_schema(payload, report_schema(), "report")


def write_report(path, command, config, data_hash, result) -> dict:
    payload = {
        "format": REPORT_FORMAT,
        "command": command,
        "config": config,
        "data_hash": data_hash,
        "result": result,
    }
    validate_report(payload)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
    return payload


# ---------------------------------------------------------------------------
# dataset loading and synthesis


def _load_dataset(path, loss_kind, normalize, intercept):
    expect = "classification" if loss_kind in _CLASSIFICATION_LOSSES else "regression"
    ds = data.load_libsvm(path, expect_labels=expect)
    if expect == "regression" and bool(np.all(np.isin(ds.y, (-1.0, 1.0)))):
        # Regression losses on sign labels still support error counting.
        ds = data.Dataset(ds.x, ds.y, classification=True)
    if normalize != "none":
        ds = data.normalize(ds, normalize)
    if intercept:
        ones = np.ones((ds.n, 1))
        col = sparse.csr_matrix(ones) if ds.is_sparse else ones
        ds = ds.add_features(col)
    return ds


def synth_dataset(seed, n, d, sparsity, separation) -> data.Dataset:
    """Two-blob classification data with controllable overlap.

    Rows are standard Gaussian noise shifted by ``separation`` along a fixed
    unit direction, with the shift's sign given by the label.  ``sparsity``
    is the expected fraction of entries zeroed out.  The same seed always
    yields the same dataset.
    """
    if n < 1 or d < 1:
        raise ConfigError("synth needs n >= 1 and d >= 1")
    if not 0.0 <= sparsity < 1.0:
        raise ConfigError("sparsity must be in [0, 1), got %g" % sparsity)
    if separation < 0.0:
        raise ConfigError("separation must be nonnegative, got %g" % separation)
    rng = np.random.default_rng(seed)
    y = rng.choice(np.array([-1.0, 1.0]), size=n)
    direction = rng.standard_normal(d)
    direction /= np.linalg.norm(direction)
    x = rng.standard_normal((n, d)) + separation * np.outer(y, direction)
    if sparsity > 0.0:
        x[rng.random((n, d)) < sparsity] = 0.0
    return data.Dataset(x, y, classification=True)


def _parse_counts(text):
    """Parse a modification-count spec: either ``1..10`` or ``1,2,5``."""
    text = text.strip()
    try:
        if ".." in text:
            lo, hi = text.split("..")
            counts = list(range(int(lo), int(hi) + 1))
        else:
            counts = [int(tok) for tok in text.split(",")]
    except ValueError:
        raise ConfigError("cannot parse counts %r; want 'a..b' or 'a,b,c'" % text)
    return counts

def _parse_floats(text):
    try:
        return [float(tok) for tok in text.split(",")]
    except ValueError:
        raise ConfigError("cannot parse %r as comma-separated numbers" % text)


def _parse_indices(text):
    try:
        return [int(tok) for tok in text.split(",")]
    except ValueError:
        raise ConfigError("cannot parse %r as comma-separated indices" % text)


# ---------------------------------------------------------------------------
# command plumbing


def _fail(exc):
    click.echo("error: %s" % exc, err=True)
    sys.exit(exc.exit_code)


def _handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except GlruError as exc:
            _fail(exc)

    return wrapper


def _model_options(fn):
    fn = click.option("--loss", "loss_kind", type=click.Choice(convex.LOSS_KINDS), default="logistic", show_default=True, help="Loss family.")(fn)
    fn = click.option("--reg", "reg_kind", type=click.Choice(convex.REG_KINDS), default="l2", show_default=True, help="Penalty family.")(fn)
    fn = click.option("--lambda", "lam", type=float, default=1.0, show_default=True, help="Penalty strength.")(fn)
    fn = click.option("--kappa", type=float, default=None, help="L1 weight for the elastic net.")(fn)
    fn = click.option("--gamma", type=float, default=1.0, show_default=True, help="Smoothing parameter for huber / smoothed_hinge.")(fn)
    fn = click.option("--intercept/--no-intercept", default=False, show_default=True, help="Append an unpenalized intercept column.")(fn)
    fn = click.option("--normalize", type=click.Choice(("dense", "sparse", "none")), default="none", show_default=True, help="Column normalization applied after loading.")(fn)
    return fn


def _build_specs(loss_kind, reg_kind, lam, kappa, gamma, intercept, dim):
    kwargs = {"intercept": intercept, "dim": dim}
    if kappa is not None:
        kwargs["kappa"] = kappa
    try:
        loss = convex.LossSpec(loss_kind, gamma=gamma)
        reg = convex.RegSpec(reg_kind, lam, **kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc))
    return loss, reg


@click.group()
@click.version_option(package_name="glru")
def main():
    """Certified screening for retrained linear models."""


@main.command()
@click.option("--data", "data_path", required=True, type=click.Path(exists=True, dir_okay=False), help="Training data in libsvm format.")
@_model_options
@click.option("--tol", type=float, default=1e-6, show_default=True, help="Relative duality gap at which training stops.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False), help="Where to write the model JSON.")
@_handle_errors
def train(data_path, loss_kind, reg_kind, lam, kappa, gamma, intercept, normalize, tol, out_path):
    """Fit a model and save it together with its certificate cache."""
    ds = _load_dataset(data_path, loss_kind, normalize, intercept)
    loss, reg = _build_specs(loss_kind, reg_kind, lam, kappa, gamma, intercept, ds.d)
    model = erm.train(ds, loss, reg, rel_gap_tol=tol)
    preprocess = {"normalize": normalize, "intercept": intercept, "loss": loss_kind}
    save_model(out_path, model, loss, reg, preprocess, dataset_hash(ds))
    click.echo("trained on %d x %d, relative gap %.3e, wrote %s" % (ds.n, ds.d, model.relative_gap_at_stop, out_path))


def _load_addition_rows(path, ds, expect):
    new = data.load_libsvm(path, expect_labels=expect)
    if new.d > ds.d:
        raise ValidationError("added instances have %d features, dataset has %d" % (new.d, ds.d))
    x = new.x.tocsr() if new.is_sparse else sparse.csr_matrix(new.x)
    if new.d < ds.d:
        x = sparse.hstack([x, sparse.csr_matrix((new.n, ds.d - new.d))], format="csr")
    return x, new.y


def _load_addition_cols(path, n):
    try:
        cols = np.loadtxt(path, dtype=np.float64, ndmin=2)
    except (OSError, ValueError) as exc:
        raise ValidationError("cannot read feature matrix %s: %s" % (path, exc))
    if cols.shape[0] != n:
        raise ValidationError("feature file has %d rows, dataset has %d instances" % (cols.shape[0], n))
    return cols


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False), help="Model JSON written by train.")
@click.option("--data", "data_path", required=True, type=click.Path(exists=True, dir_okay=False), help="The data the model was trained on.")
@click.option("--remove-instances", "rm_instances", default=None, help="Comma-separated row indices to drop.")
@click.option("--add-instances", "add_instances", default=None, type=click.Path(exists=True, dir_okay=False), help="Libsvm file of rows to add.")
@click.option("--remove-features", "rm_features", default=None, help="Comma-separated column indices to drop.")
@click.option("--add-features", "add_features", default=None, type=click.Path(exists=True, dir_okay=False), help="Whitespace-delimited matrix of columns to add.")
@_handle_errors
def gap(model_path, data_path, rm_instances, add_instances, rm_features, add_features):
    """Price a dataset modification and print the certificate as JSON."""
    chosen = [v for v in (rm_instances, add_instances, rm_features, add_features) if v is not None]
    if len(chosen) != 1:
        raise click.UsageError("pass exactly one of --remove-instances / --add-instances / --remove-features / --add-features")
    model, loss, reg, preprocess, stored_hash = load_model(model_path)
    ds = _load_dataset(data_path, preprocess["loss"], preprocess["normalize"], preprocess["intercept"])
    if dataset_hash(ds) != stored_hash:
        raise ValidationError("data in %s does not match the data the model was trained on" % data_path)
    if (add_instances or add_features) and preprocess["normalize"] != "none":
        raise ConfigError("additions are not defined for normalized data; retrain with --normalize none")

    if rm_instances is not None:
        cert, _ = gapfast.gap_instance_removal(model, ds, _parse_indices(rm_instances))
    elif rm_features is not None:
        cert, _ = gapfast.gap_feature_removal(model, ds, _parse_indices(rm_features))
    elif add_instances is not None:
        expect = "classification" if ds.classification else "regression"
        rows, labels = _load_addition_rows(add_instances, ds, expect)
        if preprocess["intercept"]:
            rows = rows.tolil()
            rows[:, ds.d - 1] = 1.0
            rows = rows.tocsr()
        cert, _ = gapfast.gap_instance_addition(model, ds, rows, labels)
    else:
        cols = _load_addition_cols(add_features, ds.n)
        cert, _ = gapfast.gap_feature_addition(model, ds, cols)

    payload = {
        "gap": cert.gap,
        "n_new": cert.n_new,
        "lam": cert.lam,
        "mu": cert.mu,
        "r_primal": float(bounds.radius_primal(cert)) if cert.lam > 0 else None,
        "r_dual": float(bounds.radius_dual(cert)) if cert.mu > 0 else None,
    }
    click.echo(json.dumps(payload))


@main.command()
@click.option("--data", "data_path", required=True, type=click.Path(exists=True, dir_okay=False), help="Classification data in libsvm format.")
@_model_options
@click.option("--glru/--naive", "use_glru", default=False, show_default=True, help="Screen folds with certified bounds instead of retraining all of them.")
@click.option("--approx", is_flag=True, default=False, help="One-step Newton approximation instead of exact retraining.")
@click.option("--bound", type=click.Choice(workflows.BOUND_KINDS), default="primal-scb", show_default=True, help="Which score bound the screen uses.")
@click.option("--early-stop", is_flag=True, default=False, help="Stop fold retraining once the fold's own certificate settles its label.")
@click.option("--tol", type=float, default=1e-8, show_default=True, help="Relative duality gap for (re)training.")
@click.option("--jobs", type=int, default=None, help="Worker threads for fold retraining (default: all cores).")
@click.option("--report", "report_path", default=None, type=click.Path(dir_okay=False), help="Write the full report JSON here.")
@click.option("--figure", "figure_path", default=None, type=click.Path(dir_okay=False), help="Render a summary figure PNG here.")
@_handle_errors
def loocv(data_path, loss_kind, reg_kind, lam, kappa, gamma, intercept, normalize, use_glru, approx, bound, early_stop, tol, jobs, report_path, figure_path):
    """Leave-one-out cross validation, exact or certificate-screened."""
    if use_glru and approx:
        raise click.UsageError("--glru and --approx are mutually exclusive")
    ds = _load_dataset(data_path, loss_kind, normalize, intercept)
    loss, reg = _build_specs(loss_kind, reg_kind, lam, kappa, gamma, intercept, ds.d)
    jobs = jobs or os.cpu_count() or 1
    if approx:
        rep = workflows.loocv_approx(ds, loss, reg, {"rel_gap_tol": min(tol, 1e-10)})
    elif use_glru:
        rep = workflows.loocv_glru(ds, loss, reg, {"bound": bound, "early_stop": early_stop, "rel_gap_tol": tol, "jobs": jobs})
    else:
        rep = workflows.loocv_naive(ds, loss, reg, {"rel_gap_tol": tol, "jobs": jobs})
    click.echo("loocv errors: %d / %d, trainings: %d" % (rep.error_count, ds.n, rep.trainings_performed))
    config = {
        "data": data_path, "loss": loss_kind, "reg": reg_kind, "lambda": lam,
        "kappa": kappa, "gamma": gamma, "intercept": intercept, "normalize": normalize,
        "method": "approx" if approx else ("glru" if use_glru else "naive"),
        "bound": bound, "early_stop": early_stop, "tol": tol, "jobs": jobs,
    }
    if report_path:
        write_report(report_path, "loocv", config, dataset_hash(ds), rep.to_dict())
        click.echo("wrote %s" % report_path)
    if figure_path:
        plots.loocv_figure(rep, figure_path)
        click.echo("wrote %s" % figure_path)


@main.command()
@click.option("--train", "train_path", required=True, type=click.Path(exists=True, dir_okay=False), help="Training split in libsvm format.")
@click.option("--valid", "valid_path", required=True, type=click.Path(exists=True, dir_okay=False), help="Validation split in libsvm format.")
@_model_options
@click.option("--glru/--naive", "use_glru", default=False, show_default=True, help="Screen candidates with certified bounds.")
@click.option("--bound", type=click.Choice(workflows.BOUND_KINDS), default="primal-scb", show_default=True, help="Which score bound the screen uses.")
@click.option("--tol", type=float, default=1e-8, show_default=True, help="Relative duality gap for candidate training.")
@click.option("--jobs", type=int, default=None, help="Worker threads for candidate training (default: all cores).")
@click.option("--report", "report_path", default=None, type=click.Path(dir_okay=False), help="Write the full report JSON here.")
@click.option("--figure", "figure_path", default=None, type=click.Path(dir_okay=False), help="Render a summary figure PNG here.")
@_handle_errors
def stepwise(train_path, valid_path, loss_kind, reg_kind, lam, kappa, gamma, intercept, normalize, use_glru, bound, tol, jobs, report_path, figure_path):
    """Backward feature elimination scored on a validation split."""
    train_ds = _load_dataset(train_path, loss_kind, normalize, intercept)
    valid_ds = _load_dataset(valid_path, loss_kind, normalize, intercept)
    if valid_ds.d != train_ds.d:
        raise ValidationError("train has %d features but valid has %d" % (train_ds.d, valid_ds.d))
    loss, reg = _build_specs(loss_kind, reg_kind, lam, kappa, gamma, intercept, train_ds.d)
    jobs = jobs or os.cpu_count() or 1
    config_common = {"rel_gap_tol": tol, "jobs": jobs}
    if use_glru:
        rep = workflows.stepwise_glru(train_ds, valid_ds, loss, reg, {"bound": bound, **config_common})
    else:
        rep = workflows.stepwise_naive(train_ds, valid_ds, loss, reg, config_common)
    click.echo("removed %s, kept %s" % (rep.selected, rep.final_set))
    config = {
        "train": train_path, "valid": valid_path, "loss": loss_kind, "reg": reg_kind,
        "lambda": lam, "kappa": kappa, "gamma": gamma, "intercept": intercept,
        "normalize": normalize, "method": "glru" if use_glru else "naive",
        "bound": bound, "tol": tol, "jobs": jobs,
    }
    if report_path:
        write_report(report_path, "stepwise", config, dataset_hash(train_ds), rep.to_dict())
        click.echo("wrote %s" % report_path)
    if figure_path:
        plots.stepwise_figure(rep, figure_path)
        click.echo("wrote %s" % figure_path)


@main.command()
@click.option("--data", "data_path", required=True, type=click.Path(exists=True, dir_okay=False), help="Classification data in libsvm format.")
@_model_options
@click.option("--mods", required=True, help="Modification counts, e.g. '1..10' or '1,2,5'.")
@click.option("--lambdas", required=True, help="Comma-separated penalty strengths, e.g. '1,0.1,0.01'.")
@click.option("--kinds", default=None, help="Comma-separated modification kinds (default: all four).")
@click.option("--test-fraction", type=float, default=0.25, show_default=True, help="Held-out fraction used to measure determination rates.")
@click.option("--seed", type=int, default=0, show_default=True, help="Seed for the split and the modification pools.")
@click.option("--tol", type=float, default=1e-8, show_default=True, help="Relative duality gap for training.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False), help="Where to write the rate table CSV.")
@click.option("--figure/--no-figure", "want_figure", default=True, show_default=True, help="Also render a PNG next to the CSV.")
@_handle_errors
def tightness(data_path, loss_kind, reg_kind, lam, kappa, gamma, intercept, normalize, mods, lambdas, kinds, test_fraction, seed, tol, out_path, want_figure):
    """Measure how label determination decays with modification size."""
    ds = _load_dataset(data_path, loss_kind, normalize, intercept)
    loss, reg = _build_specs(loss_kind, reg_kind, lam, kappa, gamma, intercept, ds.d)
    config = {"test_fraction": test_fraction, "seed": seed, "rel_gap_tol": tol}
    if kinds is not None:
        config["kinds"] = tuple(tok.strip() for tok in kinds.split(","))
    rows = workflows.tightness_study(ds, loss, reg, _parse_counts(mods), _parse_floats(lambdas), config)
    with open(out_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["lambda", "kind", "count", "bound", "rate"])
        writer.writeheader()
        writer.writerows(rows)
    click.echo("wrote %d rows to %s" % (len(rows), out_path))
    if want_figure:
        figure_path = os.path.splitext(out_path)[0] + ".png"
        plots.tightness_figure(rows, figure_path)
        click.echo("wrote %s" % figure_path)


@main.command()
@click.option("--seed", type=int, default=0, show_default=True, help="RNG seed; the same seed always gives the same file.")
@click.option("--n", type=int, default=200, show_default=True, help="Number of instances.")
@click.option("--d", type=int, default=20, show_default=True, help="Number of features.")
@click.option("--sparsity", type=float, default=0.0, show_default=True, help="Expected fraction of zero entries.")
@click.option("--separation", type=float, default=1.0, show_default=True, help="Distance between the class means.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False), help="Where to write the libsvm file.")
@_handle_errors
def synth(seed, n, d, sparsity, separation, out_path):
    """Generate a reproducible two-class dataset in libsvm format."""
    ds = synth_dataset(seed, n, d, sparsity, separation)
    data.dump_libsvm(ds, out_path)
    nnz = int(np.count_nonzero(ds.x))
    click.echo("wrote %s: %d x %d, %d nonzeros, hash %s" % (out_path, n, d, nnz, dataset_hash(ds)[:12]))


if __name__ == "__main__":
    main()
