"""Command line front end: ``localsched run|gen|verify|certify|estimate|bench``."""

from __future__ import annotations

import dataclasses
import functools
import json
import sys
from pathlib import Path

import click

from . import __version__
from .hashing import SeedCertificate
from .harness import (
    GEN_KINDS,
    ConfigError,
    ExperimentConfig,
    ExperimentError,
    gen_instance,
    load_config,
    report_json,
    resolve_out,
    reverify_certificate,
    run_experiment,
)
from .model import ContractViolation, ParameterError, read_json, write_json


def _fail(msg: str, code: int = 2):
    click.echo(f"error: {msg}", err=True)
    sys.exit(code)


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except FileNotFoundError as exc:
            _fail(str(exc))
        except ConfigError as exc:
            click.echo("error: invalid config", err=True)
            for v in exc.violations:
                click.echo(f"  - {v}", err=True)
            sys.exit(2)
        except (ExperimentError, ContractViolation) as exc:
            _fail(str(exc), 3)
        except ParameterError as exc:
            _fail(str(exc))

    return wrapper


def common(fn):
    fn = click.option("--seed", type=int, default=None, help="Master seed (u64).")(fn)
    fn = click.option("--trials", type=int, default=None, help="Trial count.")(fn)
    fn = click.option("--out", "out", type=click.Path(), default=None, help="Output directory.")(fn)
    fn = click.option("--knob-l", type=int, default=None, help="Pin the small-step count l.")(fn)
    fn = click.option("--knob-k", type=int, default=None, help="Pin the hash-set size k.")(fn)
    fn = click.option("--threads", type=int, default=None, help="Worker threads for trials.")(fn)
    fn = click.option("--csv", "want_csv", is_flag=True, default=False, help="Also write trace.csv.")(fn)
    return fn


def _overrides(cfg: ExperimentConfig, seed, trials, out, knob_l, knob_k, threads, want_csv) -> ExperimentConfig:
    knobs = dict(cfg.knobs)
    if knob_l is not None:
        knobs["l"] = knob_l
    if knob_k is not None:
        knobs["k"] = knob_k
    doc = cfg.to_dict()
    doc["knobs"] = knobs
    for key, val in (("master_seed", seed), ("trials", trials), ("out", out), ("threads", threads)):
        if val is not None:
            doc[key] = val
    if want_csv:
        doc["csv"] = True
    return ExperimentConfig.from_dict(doc, cfg.base_dir)


def _emit(report: dict) -> None:
    click.echo(report_json(report), nl=False)
    sys.exit(0 if report["ok"] else 1)


def _config_from(config, mode: str | None, **doc) -> ExperimentConfig:
    if config:
        cfg = load_config(config)
        if mode and cfg.mode != mode:
            cfg = dataclasses.replace(cfg, mode=mode)
        return cfg
    doc = {k: v for k, v in doc.items() if v is not None}
    return ExperimentConfig.from_dict({"mode": mode, **doc}, None)


@click.group()
@click.version_option(version=__version__)
def main():
    """Local, stateless job-shop scheduling and routing simulator."""


@main.command()
@click.option("--config", "config", type=click.Path(), required=True, help="Experiment config (JSON).")
@common
@_guarded
def run(config, seed, trials, out, knob_l, knob_k, threads, want_csv):
    """Run the experiment described by a config file."""
    cfg = _overrides(load_config(config), seed, trials, out, knob_l, knob_k, threads, want_csv)
    _emit(run_experiment(cfg))


@main.command()
@click.argument("kind", type=click.Choice(GEN_KINDS))
@click.option("--param", "params", multiple=True, help="Size parameter as key=value (repeatable).")
@click.option("--seed", type=int, default=0)
@click.option("--out", "out", type=click.Path(), default=None)
@_guarded
def gen(kind, params, seed, out):
    """Generate an instance, graph or demand plus a manifest."""
    size = {}
    for item in params:
        key, sep, val = item.partition("=")
        if not sep:
            raise ParameterError(f"--param expects key=value, got {item!r}")
        size[key] = json.loads(val) if val[:1] in "-0123456789tf[{" else val
    out_dir = resolve_out(out) or Path(".")
    manifest = gen_instance(kind, size, seed, out_dir)
    manifest.pop("documents")
    click.echo(json.dumps(manifest, sort_keys=True, indent=2))


@main.command()
@click.option("--config", "config", type=click.Path(), default=None)
@click.option("--instance", type=click.Path(), default=None)
@click.option("--L", "L", type=int, default=None, help="Scale (power of two).")
@click.option("--l", "l", type=int, default=None, help="Small steps per large step.")
@common
@_guarded
def verify(config, instance, L, l, seed, trials, out, knob_l, knob_k, threads, want_csv):
    """Check whether a seeded hash set is good for an instance's jobs."""
    cfg = _config_from(config, "verify-hash", instance=instance, L=L, l=l)
    _emit(run_experiment(_overrides(cfg, seed, trials, out, knob_l, knob_k, threads, want_csv)))


@main.command()
@click.option("--config", "config", type=click.Path(), default=None)
@click.option("--instance", type=click.Path(), default=None)
@click.option("--L", "L", type=int, default=None)
@click.option("--l", "l", type=int, default=None)
@click.option("--s-max", type=int, default=None, help="Largest job-set size to cover.")
@click.option("--budget", type=int, default=None, help="Job-set search budget.")
@click.option("--reverify", type=click.Path(), default=None, help="Re-check a saved certificate instead.")
@common
@_guarded
def certify(config, instance, L, l, s_max, budget, reverify, seed, trials, out, knob_l, knob_k, threads, want_csv):
    """Search for a master seed whose hash sets are good for the whole domain."""
    if reverify:
        cert = SeedCertificate.from_dict(read_json(reverify, "certificate"))
        ok = reverify_certificate(cert)
        click.echo(json.dumps({"master_seed": cert.master_seed, "reverified": ok}, sort_keys=True))
        sys.exit(0 if ok else 1)
    cfg = _config_from(config, "certify-seed", instance=instance, L=L, l=l, s_max=s_max, search_budget=budget)
    cfg = _overrides(cfg, seed, trials, out, knob_l, knob_k, threads, want_csv)
    report = run_experiment(cfg)
    out_dir = resolve_out(cfg.out)
    if out_dir is not None and "certificate" in report["results"]:
        write_json(out_dir / "certificate.json", report["results"]["certificate"])
    _emit(report)


@main.command()
@click.option("--config", "config", type=click.Path(), default=None)
@click.option("--instance", type=click.Path(), default=None)
@click.option("--L", "L", type=int, default=None)
@click.option("--l", "l", type=int, default=None)
@common
@_guarded
def estimate(config, instance, L, l, seed, trials, out, knob_l, knob_k, threads, want_csv):
    """Monte Carlo estimate of the not-good rate of one random hash function."""
    cfg = _config_from(config, "verify-hash", instance=instance, L=L, l=l)
    cfg = _overrides(cfg, seed, 1000 if trials is None else trials, out, knob_l, knob_k, threads, want_csv)
    cfg = dataclasses.replace(cfg, estimate=True)
    _emit(run_experiment(cfg))


@main.command()
@click.option("--config", "config", type=click.Path(), default=None)
@click.option("--instance", type=click.Path(), default=None)
@common
@_guarded
def bench(config, instance, seed, trials, out, knob_l, knob_k, threads, want_csv):
    """Run the stateless scheduler over consecutive seeds and time it."""
    cfg = _config_from(config, "bench", instance=instance)
    _emit(run_experiment(_overrides(cfg, seed, trials, out, knob_l, knob_k, threads, want_csv)))


if __name__ == "__main__":
    main()
