"""CLI interface for cascadeseg."""

import functools
from pathlib import Path

import click

from cascadeseg.config import load_config, serialize_config
from cascadeseg.errors import CascadeSegError
from cascadeseg.utils.logging_config import setup_logging

CHECKPOINT_NAME = "checkpoint.npz"
LOSS_CSV_NAME = "loss.csv"
METRICS_CSV_NAME = "metrics.csv"
CURVE_CSV_NAME = "curve.csv"


def _handle_errors(func):
    """Turn library errors into a one-line diagnostic and exit code 1."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except CascadeSegError as e:
            raise click.ClickException(str(e)) from e

    return wrapper


def _run_config(ctx, seed: int | None):
    config = ctx.obj["config"]
    return config if seed is None else config.replace(seed=seed)


@click.group()
@click.option("--config", "config_path", default=None, type=click.Path(dir_okay=False), help="Run config file (key=value or YAML)")
@click.option("--log-level", default=None, type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False))
@click.pass_context
def cli(ctx, config_path, log_level):
    """cascadeseg - cascaded global-guidance saliency segmentation on a from-scratch autodiff engine."""
    ctx.ensure_object(dict)
    try:
        config = load_config(config_path)
    except CascadeSegError as e:
        raise click.ClickException(str(e)) from e
    setup_logging(log_level or config.log_level, config.log_file or None)
    ctx.obj["config"] = config


@cli.command()
@click.option("--seed", type=int, default=None, help="Overrides the config seed")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False), help="Output directory")
@click.option("--checkpoint", "checkpoint_path", default=None, type=click.Path(dir_okay=False), help="Checkpoint path (default: OUT/checkpoint.npz)")
@click.option("--iterations", type=int, default=None, help="Overrides the config iteration count")
@click.pass_context
@_handle_errors
def train(ctx, seed, out_dir, checkpoint_path, iterations):
    """Train on the synthetic shapes task and write a checkpoint plus loss CSV."""
    from cascadeseg.network.checkpoint import save_checkpoint
    from cascadeseg.training.trainer import train_toy, write_loss_csv

    config = _run_config(ctx, seed)
    if iterations is not None:
        config = config.replace(iterations=iterations)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    result = train_toy(config.training(), config.metrics())
    ckpt = save_checkpoint(checkpoint_path or out / CHECKPOINT_NAME, result.params)
    losses = write_loss_csv(out / LOSS_CSV_NAME, result.history)

    click.echo(f"checkpoint: {ckpt}")
    click.echo(f"loss curve: {losses}")
    click.echo(f"held-out maxF={result.max_f:.6f} mae={result.mae:.6f} smeasure={result.s_measure:.6f}")


@cli.command()
@click.option("--checkpoint", "checkpoint_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.argument("images", nargs=-1, required=True, type=click.Path(dir_okay=False))
@click.pass_context
@_handle_errors
def infer(ctx, checkpoint_path, out_dir, images):
    """Write an 8-bit grayscale saliency map for each input image."""
    from cascadeseg.imaging.masks import MaskImage, load_image, save_mask
    from cascadeseg.network.checkpoint import load_checkpoint
    from cascadeseg.network.model import forward, images_to_tensor

    params = load_checkpoint(checkpoint_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for image_path in images:
        image = images_to_tensor([load_image(image_path)])
        saliency = forward(image, params.config, params)
        written = save_mask(out / f"{Path(image_path).stem}.png", MaskImage.from_unit(saliency.array(0)))
        click.echo(str(written))


@cli.command(name="eval")
@click.option("--pred", "pred_dir", required=True, type=click.Path(file_okay=False))
@click.option("--gt", "gt_dir", required=True, type=click.Path(file_okay=False))
@click.option("--out", "out_dir", default=".", show_default=True, type=click.Path(file_okay=False), help="Directory for metrics.csv")
@click.option("--strict-size", is_flag=True, help="Fail instead of resizing predictions to ground-truth size")
@click.option("--curve", is_flag=True, help="Also write the 256-point precision/recall curve CSV")
@click.pass_context
@_handle_errors
def evaluate(ctx, pred_dir, gt_dir, out_dir, strict_size, curve):
    """Score a prediction directory against a ground-truth directory."""
    from cascadeseg.metrics.evaluator import evaluate_dataset

    config = ctx.obj["config"]
    report = evaluate_dataset(pred_dir, gt_dir, config.metrics(), strict_size=strict_size, workers=config.workers)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report.to_csv(out / METRICS_CSV_NAME)
    if curve:
        report.curve_to_csv(out / CURVE_CSV_NAME)
    click.echo(report.summary())


@cli.command()
@click.option("--seed", type=int, default=None)
@click.option("--tolerance", type=float, default=1e-4, show_default=True)
@click.option("--instances", type=int, default=20, show_default=True, help="Seeded samples for the model check")
@click.option("--coords", type=int, default=2, show_default=True, help="Coordinates checked per parameter tensor and instance")
@click.option("--image-size", type=int, default=32, show_default=True)
@click.option("--ops/--no-ops", default=True, help="Also run the per-op suite")
@click.pass_context
@_handle_errors
def gradcheck(ctx, seed, tolerance, instances, coords, image_size, ops):
    """Finite-difference check of every op and the full model loss."""
    from cascadeseg.training.diagnostics import check_model_gradients, run_op_suite

    config = _run_config(ctx, seed)
    worst = 0.0
    if ops:
        for name, error in run_op_suite(config.seed).items():
            click.echo(f"op {name}: {error:.3e}")
            worst = max(worst, error)
    report = check_model_gradients(
        config.cascade(), config.seed, image_size=image_size, max_coords=coords, instances=instances
    )
    click.echo(
        f"model: {report.instances} instances, {report.checked} coordinates checked, "
        f"{report.skipped} skipped, worst {report.worst_param}"
    )
    worst = max(worst, report.max_rel_error)
    click.echo(f"max relative error: {worst:.3e}")
    if not (report.passed(tolerance) and worst < tolerance):
        click.echo(f"gradient check FAILED (tolerance {tolerance:g})", err=True)
        ctx.exit(1)


@cli.command()
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--count", type=int, default=16, show_default=True)
@click.option("--image-size", type=int, default=None, help="Defaults to the config image_size")
@click.pass_context
@_handle_errors
def synth(ctx, seed, out_dir, count, image_size):
    """Write a synthetic dataset as images/<id>.png and masks/<id>.png."""
    from cascadeseg.imaging.masks import MaskImage, save_image, save_mask
    from cascadeseg.training.synthetic import synth_dataset

    config = _run_config(ctx, seed)
    samples = synth_dataset(config.seed, count, image_size or config.image_size)
    images_dir = Path(out_dir) / "images"
    masks_dir = Path(out_dir) / "masks"
    images_dir.mkdir(parents=True, exist_ok=True)
    masks_dir.mkdir(parents=True, exist_ok=True)
    for index, sample in enumerate(samples):
        save_image(images_dir / f"{index:04d}.png", sample.image)
        save_mask(masks_dir / f"{index:04d}.png", MaskImage.from_unit(sample.mask))
    click.echo(f"Wrote {len(samples)} samples to {out_dir}")


@cli.command(name="show-config")
@click.pass_context
def show_config(ctx):
    """Print the effective run configuration."""
    click.echo(serialize_config(ctx.obj["config"]), nl=False)
