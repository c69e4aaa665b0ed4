"""Batch command-line front-end for the WER prediction pipeline.

Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric failure.
"""

import functools
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import air, corpus, fitting, metrics, nn, predictors, plots
from .errors import (
    AllZeroSignal,
    FitDiverged,
    InsufficientDecay,
    JacobianSingular,
    NonFiniteGradient,
    RankDeficient,
    RevwerError,
    TooFewGroups,
)

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

_NUMERIC_ERRORS = (FitDiverged, JacobianSingular, NonFiniteGradient,
                   RankDeficient, np.linalg.LinAlgError)
_DATA_ERRORS = (AllZeroSignal, InsufficientDecay, TooFewGroups,
                FileNotFoundError, OSError)


def _guarded(fn):
    """Map exceptions to the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except _NUMERIC_ERRORS as exc:
            click.echo(f"numeric failure: {exc}", err=True)
            sys.exit(EXIT_NUMERIC)
        except (json.JSONDecodeError, ValueError) as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except _DATA_ERRORS as exc:
            click.echo(f"data error: {exc}", err=True)
            sys.exit(EXIT_DATA)
        except RevwerError as exc:
            click.echo(f"data error: {exc}", err=True)
            sys.exit(EXIT_DATA)

    return wrapper


@click.group()
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="JSON pipeline configuration.")
@click.option("--out", "out_dir", type=click.Path(), default=".",
              show_default=True, help="Output directory.")
@click.option("--jobs", type=int, default=1, show_default=True,
              help="Reserved; processing is single-process.")
@click.pass_context
def main(ctx, seed, config_path, out_dir, jobs):
    """Room-acoustic analysis and WER prediction pipeline."""
    ctx.ensure_object(dict)
    ctx.obj["seed"] = seed
    ctx.obj["out"] = Path(out_dir)
    ctx.obj["out"].mkdir(parents=True, exist_ok=True)
    ctx.obj["jobs"] = jobs
    if config_path is not None:
        try:
            ctx.obj["config"] = corpus.CorpusConfig.from_json(
                Path(config_path).read_text()
            )
        except (json.JSONDecodeError, ValueError) as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except OSError as exc:
            click.echo(f"data error: {exc}", err=True)
            sys.exit(EXIT_DATA)
    else:
        ctx.obj["config"] = corpus.CorpusConfig()


def _collect_wavs(paths):
    files = []
    for p in map(Path, paths):
        if p.is_dir():
            files.extend(sorted(p.glob("*.wav")))
        else:
            files.append(p)
    return files


@main.command()
@click.argument("inputs", nargs=-1, required=True)
@click.pass_context
@_guarded
def analyze(ctx, inputs):
    """Analyze AIR WAV files into a 15-parameter CSV."""
    out_path = ctx.obj["out"] / "params.csv"
    results = {}
    failures = []
    for path in _collect_wavs(inputs):
        try:
            signal = corpus.read_wav(path)
            ir = air.ImpulseResponse(signal.samples, signal.sample_rate)
            results[path.stem] = air.analyze(ir)
        except (RevwerError, ValueError, OSError) as exc:
            failures.append(f"{path}: {exc}")
    air.write_params_csv(out_path, results)
    click.echo(f"wrote {len(results)} rows to {out_path}")
    if failures:
        for failure in failures:
            click.echo(f"data error: {failure}", err=True)
        sys.exit(EXIT_DATA)


@main.command("synth-air")
@click.option("--specs", "specs_path", type=click.Path(exists=True),
              required=True, help="JSON list of AIR spec objects.")
@click.pass_context
@_guarded
def synth_air(ctx, specs_path):
    """Synthesize AIRs from a JSON batch of specs."""
    entries = json.loads(Path(specs_path).read_text())
    if not isinstance(entries, list):
        raise ValueError("spec batch must be a JSON list")
    for i, entry in enumerate(entries):
        spec = corpus.AirSpec(**entry)
        ir = corpus.synth_air(spec)
        path = ctx.obj["out"] / f"air{i:04d}.wav"
        corpus.write_wav(path, corpus.Signal(ir.samples, ir.sample_rate))
    click.echo(f"wrote {len(entries)} AIRs to {ctx.obj['out']}")


@main.command("build-corpus")
@click.option("--audio/--no-audio", default=False, show_default=True,
              help="Also synthesize reverberant audio WAVs.")
@click.pass_context
@_guarded
def build_corpus(ctx, audio):
    """Generate the synthetic corpus manifest (and optionally audio)."""
    config = ctx.obj["config"]
    if audio != config.with_audio:
        config = corpus.CorpusConfig(
            **{**config.__dict__, "with_audio": audio}
        )
    out = ctx.obj["out"]
    records, _, params = corpus.build_corpus(
        config, out_dir=out if audio else None
    )
    tr_talkers = {r.talker_id for r in records if r.split == "TR"}
    te_talkers = {r.talker_id for r in records if r.split == "TE"}
    tr_airs = {r.air_id for r in records if r.split == "TR"}
    te_airs = {r.air_id for r in records if r.split == "TE"}
    if tr_talkers & te_talkers or tr_airs & te_airs:
        raise RuntimeError("split disjointness violated; refusing to write")
    corpus.write_manifest(out / "manifest.csv", records)
    air.write_params_csv(out / "params.csv", params)
    counts = {s: sum(r.split == s for r in records) for s in ("TR", "CV", "TE")}
    click.echo(f"wrote {len(records)} records: {counts}")


@main.command()
@click.option("--pairs", "pairs_path", type=click.Path(exists=True),
              required=True,
              help="Two-column CSV of reference,hypothesis transcripts.")
@click.pass_context
@_guarded
def wer(ctx, pairs_path):
    """Score transcript pairs; writes per-pair WER rows."""
    import csv

    out_path = ctx.obj["out"] / "wer.csv"
    with open(pairs_path, newline="") as fh, \
            open(out_path, "w", newline="") as out_fh:
        writer = csv.writer(out_fh)
        writer.writerow(["index", "deletions", "substitutions",
                         "insertions", "reference_length", "wer"])
        for i, row in enumerate(csv.reader(fh)):
            counts, rate = metrics.word_error_rate(row[0], row[1])
            writer.writerow([i, counts.deletions, counts.substitutions,
                             counts.insertions, counts.reference_length,
                             repr(rate)])
    click.echo(f"wrote {out_path}")


def _load_records(manifest_path, params_path):
    records = corpus.read_manifest(manifest_path)
    params = air.read_params_csv(params_path)
    for record in records:
        record.acoustic_params = params[record.air_id]
    return records


@main.command()
@click.option("--manifest", type=click.Path(exists=True), required=True)
@click.option("--params", "params_path", type=click.Path(exists=True),
              required=True)
@click.option("--param", "param_name", default="c50", show_default=True,
              type=click.Choice(air.PARAM_NAMES))
@click.option("--kind", default="sigmoid", show_default=True,
              type=click.Choice(["linear", "cubic", "sigmoid"]))
@click.pass_context
@_guarded
def fit(ctx, manifest, params_path, param_name, kind):
    """Fit a WER mapping on TR; writes model JSON and a fit plot."""
    records = _load_records(manifest, params_path)
    train = [r for r in records if r.split == "TR"]
    test = [r for r in records if r.split == "TE"]
    k = air.PARAM_NAMES.index(param_name)
    model, rho, err = fitting.fit_and_evaluate(train, test, k, kind)
    out = ctx.obj["out"]
    model_path = out / f"fit_{param_name}_{kind}.json"
    model_path.write_text(fitting.model_to_json(model))
    a = [r.acoustic_params.as_vector()[k] for r in records]
    w = [r.true_wer for r in records]
    plot_path = out / f"fit_{param_name}_{kind}.svg"
    plots.fit_scatter_plot(plot_path, a, w, model,
                           param_name=f"{param_name.upper()} ",
                           bin_width=1.0)
    click.echo(f"{kind} fit on {param_name}: TE |rho|={rho:.3f} "
               f"RMSE={err:.3f}; wrote {model_path} and {plot_path}")


@main.command("train-mlp")
@click.option("--manifest", type=click.Path(exists=True), required=True)
@click.option("--params", "params_path", type=click.Path(exists=True),
              required=True)
@click.option("--hidden-layers", default=1, show_default=True)
@click.option("--neurons", default=3, show_default=True)
@click.option("--epochs", default=30, show_default=True)
@click.pass_context
@_guarded
def train_mlp(ctx, manifest, params_path, hidden_layers, neurons, epochs):
    """Train the acoustic-parameter MLP; writes a checkpoint."""
    records = _load_records(manifest, params_path)
    train = [r for r in records if r.split == "TR"]
    cv = [r for r in records if r.split == "CV"]
    config = predictors.MlpConfig(hidden_layers=hidden_layers,
                                  neurons_per_layer=neurons, epochs=epochs)
    checkpoint = predictors.train_mlp(train, cv, config,
                                      seed=ctx.obj["seed"])
    path = ctx.obj["out"] / "mlp_checkpoint.json"
    checkpoint.save(path)
    click.echo(f"wrote {path} (best CV loss "
               f"{checkpoint.metadata['final_cv_loss']:.5f})")


@main.command("grid-search")
@click.option("--manifest", type=click.Path(exists=True), required=True)
@click.option("--params", "params_path", type=click.Path(exists=True),
              required=True)
@click.option("--epochs", default=30, show_default=True)
@click.option("--full-n-axis", is_flag=True, default=False,
              help="Search every width 1..32 instead of the subsampled axis.")
@click.pass_context
@_guarded
def grid_search(ctx, manifest, params_path, epochs, full_n_axis):
    """MLP grid search over depth and width; writes the CV-loss table."""
    import csv

    records = _load_records(manifest, params_path)
    train = [r for r in records if r.split == "TR"]
    cv = [r for r in records if r.split == "CV"]
    best_l, best_n, table = predictors.grid_search_mlp(
        train, cv, seed=ctx.obj["seed"], epochs=epochs,
        full_n_axis=full_n_axis,
    )
    path = ctx.obj["out"] / "grid_search.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["hidden_layers", "neurons", "cv_loss", "param_count"])
        writer.writerows(table)
    click.echo(f"best: L={best_l} N={best_n}; wrote {path}")


@main.command("train-cnn")
@click.option("--manifest", type=click.Path(exists=True), required=True)
@click.option("--epochs", default=100, show_default=True)
@click.pass_context
@_guarded
def train_cnn(ctx, manifest, epochs):
    """Train the blind CNN-LSTM on manifest audio; writes a checkpoint."""
    records = corpus.read_manifest(manifest)
    if any(not r.audio_path for r in records):
        raise FileNotFoundError(
            "manifest has records without audio; rebuild with --audio"
        )
    train = [r for r in records if r.split == "TR"]
    cv = [r for r in records if r.split == "CV"]
    checkpoint = predictors.train_cnn_lstm(train, cv, epochs=epochs,
                                           seed=ctx.obj["seed"])
    path = ctx.obj["out"] / "cnn_lstm_checkpoint.json"
    checkpoint.save(path)
    click.echo(f"wrote {path} (best CV loss "
               f"{checkpoint.metadata['final_cv_loss']:.5f})")


#: Fixed row order of the comparison table.
TABLE_ROWS = ("C50 linear", "C50 cubic", "C50 sigmoid", "MLP", "CNN-LSTM")


@main.command()
@click.option("--manifest", type=click.Path(exists=True), required=True)
@click.option("--params", "params_path", type=click.Path(exists=True),
              required=True)
@click.option("--fits", "fits_dir", type=click.Path(), default=None,
              help="Directory holding fit_c50_*.json models.")
@click.option("--mlp", "mlp_path", type=click.Path(), default=None)
@click.option("--cnn", "cnn_path", type=click.Path(), default=None)
@click.pass_context
@_guarded
def evaluate(ctx, manifest, params_path, fits_dir, mlp_path, cnn_path):
    """Score all available predictors on TE; writes results.csv."""
    import csv

    records = _load_records(manifest, params_path)
    test = [r for r in records if r.split == "TE"]
    c50_index = air.PARAM_NAMES.index("c50")
    rows = []

    fits_dir = Path(fits_dir) if fits_dir else ctx.obj["out"]
    for kind in ("linear", "cubic", "sigmoid"):
        path = fits_dir / f"fit_c50_{kind}.json"
        if not path.exists():
            raise FileNotFoundError(
                f"missing fit artifact {path}; run the fit command first"
            )
        model = fitting.model_from_json(path.read_text())
        predictor = predictors.ParamFitPredictor(model, c50_index)
        rho, err, _ = predictors.evaluate_predictor(predictor, test)
        rows.append((f"C50 {kind}", err, rho))

    for label, path in (("MLP", mlp_path), ("CNN-LSTM", cnn_path)):
        if path is None:
            continue
        if not Path(path).exists():
            raise FileNotFoundError(f"missing checkpoint artifact {path}")
        checkpoint = nn.NetworkCheckpoint.load(path)
        rho, err, _ = predictors.evaluate_predictor(checkpoint, test)
        rows.append((label, err, rho))

    order = {name: i for i, name in enumerate(TABLE_ROWS)}
    rows.sort(key=lambda row: order.get(row[0], len(order)))
    out_path = ctx.obj["out"] / "results.csv"
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["predictor", "rmse", "abs_pearson"])
        for name, err, rho in rows:
            writer.writerow([name, f"{err:.6f}", f"{rho:.6f}"])
    click.echo(f"wrote {out_path} ({len(rows)} predictor rows)")


@main.command()
@click.option("--results", "results_path", type=click.Path(exists=True),
              required=True)
@click.pass_context
@_guarded
def report(ctx, results_path):
    """Render results.csv as a Markdown comparison table."""
    import csv

    with open(results_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    lines = ["| Predictor | RMSE | abs. Pearson |", "| --- | --- | --- |"]
    for row in rows:
        lines.append(
            f"| {row['predictor']} | {float(row['rmse']):.3f} "
            f"| {float(row['abs_pearson']):.3f} |"
        )
    out_path = ctx.obj["out"] / "report.md"
    out_path.write_text("\n".join(lines) + "\n")
    click.echo(f"wrote {out_path}")


if __name__ == "__main__":
    main()
