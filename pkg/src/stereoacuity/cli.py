"""Command-line entry points: serve the HTTP API, run simulation batches,
render stimuli to PNG, fit gamma from calibration logs, and compute
agreement statistics on result CSVs."""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import agreement, gamma_cal, observer, psi, rds
from .geometry import DEFAULT_PROFILE, DisplayProfile, pixels_to_arcsec

SIMULATE_COLUMNS = (
    "seed",
    "alpha_true",
    "beta_true",
    "lambda_true",
    "threshold_px",
    "threshold_arcsec",
    "posterior_mean_alpha",
    "gamma_true",
    "gamma_fitted",
)


def _load_profile(profile_json: str | None) -> DisplayProfile:
    if profile_json is None:
        return DEFAULT_PROFILE
    path = Path(profile_json)
    data = json.loads(path.read_text()) if path.exists() else json.loads(profile_json)
    return DisplayProfile.from_json(data)


@click.group()
def main():
    """Continuous stereoacuity measurement toolkit."""


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
@click.option(
    "--data-dir",
    default="./sessions",
    show_default=True,
    help="Directory for append-only session logs.",
)
@click.option("--profile", default=None, help="Default display profile: JSON string or file path.")
def serve(host, port, data_dir, profile):
    """Run the HTTP session service."""
    import uvicorn

    from .service import create_app

    app = create_app(data_dir, default_profile=_load_profile(profile))
    uvicorn.run(app, host=host, port=port, log_level="info")


@main.command()
@click.option("--sessions", "n_sessions", default=50, show_default=True, type=int)
@click.option("--alpha", default=(2.0,), multiple=True, type=float, help="True threshold(s), px.")
@click.option("--beta", default=3.5, show_default=True, type=float)
@click.option("--lam", "--lambda", "lam", default=0.02, show_default=True, type=float)
@click.option("--gamma-true", default=2.2, show_default=True, type=float)
@click.option("--agc-noise", default=0.0, show_default=True, type=float, help="Gray-level units.")
@click.option("--seed-base", default=0, show_default=True, type=int)
@click.option("--one-step", is_flag=True, help="Skip the calibration phase.")
@click.option("--reduced-grids", is_flag=True, help="Coarser estimation grids for big batches.")
@click.option("--profile", default=None, help="Display profile JSON (string or file).")
@click.option("--out", default="-", show_default=True, help="CSV path, or - for stdout.")
def simulate(n_sessions, alpha, beta, lam, gamma_true, agc_noise, seed_base, one_step, reduced_grids, profile, out):
    """Simulate full sessions with a synthetic observer; write one CSV row each."""
    display = _load_profile(profile)
    config = observer.reduced_psi_config() if reduced_grids else psi.PsiConfig()
    rows = []
    for a in alpha:
        for i in range(n_sessions):
            model = observer.ObserverModel(
                true_alpha_px=a,
                true_beta=beta,
                true_lambda=lam,
                seed=seed_base + i,
                agc_gamma_true=gamma_true,
                agc_noise_amplitude=agc_noise,
            )
            sim = observer.simulate_session(model, display, config, two_step=not one_step)
            rows.append(
                [
                    sim.seed,
                    sim.alpha_true,
                    sim.beta_true,
                    sim.lambda_true,
                    sim.threshold_px,
                    sim.threshold_arcsec,
                    sim.posterior_mean_alpha,
                    sim.gamma_true,
                    sim.gamma_fitted,
                ]
            )
    sink = sys.stdout if out == "-" else open(out, "w", newline="")
    try:
        writer = csv.writer(sink)
        writer.writerow(SIMULATE_COLUMNS)
        writer.writerows(rows)
    finally:
        if sink is not sys.stdout:
            sink.close()
            click.echo(f"wrote {len(rows)} sessions to {out}")


@main.command("render-stimulus")
@click.option("--o1", default=4.59, show_default=True, type=float, help="Disparity, px.")
@click.option("--shape", default="open_up", show_default=True, type=click.Choice(rds.SHAPES))
@click.option("--seed", default=42, show_default=True, type=int)
@click.option("--gamma", default=None, type=float, help="Gamma for the output LUT (default: identity).")
@click.option("--profile", default=None, help="Display profile JSON (string or file).")
@click.option("--out", default="stimulus.png", show_default=True)
def render_stimulus(o1, shape, seed, gamma, profile, out):
    """Render one anaglyph stimulus to PNG with a JSON sidecar."""
    from PIL import Image

    display = _load_profile(profile)
    config = rds.RdsConfig(profile=display)
    stimulus = rds.generate_rds(config, o1, shape, seed)
    lut = gamma_cal.build_normalized_gamma_table(gamma) if gamma else None
    img = rds.rasterize(stimulus, lut)
    Image.fromarray(img).save(out)
    sidecar = {
        "o1_px": stimulus.o1_px,
        "o2_px": stimulus.o2_px,
        "arcsec": pixels_to_arcsec(stimulus.o1_px, display),
        "shape": stimulus.shape,
        "seed": stimulus.seed,
    }
    sidecar_path = Path(out).with_suffix(".json")
    sidecar_path.write_text(json.dumps(sidecar, indent=2) + "\n")
    click.echo(f"wrote {out} and {sidecar_path}")


@main.command("fit-gamma")
@click.argument("log", type=click.Path(exists=True))
@click.option("--lut-out", default=None, help="Also write the 256-line LUT text file here.")
@click.option("--lut-json", is_flag=True, help="Include the 256-entry LUT in the JSON output.")
def fit_gamma(log, lut_out, lut_json):
    """Fit gamma from an AGC event log (JSONL of keypress/commit records,
    bare or inside session-log envelopes)."""
    events = gamma_cal.parse_agc_log(Path(log).read_text())
    session = gamma_cal.replay_agc_events(events)
    if not session.fit_ready:
        raise click.ClickException(
            f"log holds {session.trial_index - 1} committed trials; "
            f"{session.n_trials} are required for a fit"
        )
    fitted = gamma_cal.fit_gamma(session)
    table = gamma_cal.build_normalized_gamma_table(fitted)
    report = {"fitted_gamma": fitted, "n_trials": session.n_trials}
    if lut_json:
        report["lut"] = table.to_json()
    click.echo(json.dumps(report, indent=2))
    if lut_out:
        Path(lut_out).write_text(table.to_text())


@main.command()
@click.argument("csv_path", type=click.Path(exists=True))
@click.option("--col-a", required=True, help="First measurement column name.")
@click.option("--col-b", required=True, help="Second measurement column name.")
def analyze(csv_path, col_a, col_b):
    """Agreement statistics between two CSV columns: Spearman, Bland-Altman,
    ICC(2,k)."""
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        if col_a not in reader.fieldnames or col_b not in reader.fieldnames:
            raise click.ClickException(
                f"columns {col_a!r}/{col_b!r} not found; available: {reader.fieldnames}"
            )
        a, b = [], []
        for row in reader:
            a.append(float(row[col_a]))
            b.append(float(row[col_b]))
    report = {
        "n": len(a),
        "spearman": agreement.spearman(a, b),
        "bland_altman": agreement.bland_altman(a, b).to_json(),
        "icc_2k": agreement.icc_2k(np.column_stack([a, b])),
    }
    click.echo(json.dumps(report, indent=2))


if __name__ == "__main__":
    main()
