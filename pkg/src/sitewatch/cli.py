"""``engine`` command line: check, replay, serve, render, plus HTTP client helpers."""
from __future__ import annotations

import logging
import signal
import sys
import threading
from pathlib import Path

import click

from .config import ConfigError, load_config
from .engine import DirectorySink, Engine, ModelError, check, load_knowledge, replay
from .notification import CommandLineError, parse_command_lines, render_xml

EXIT_QUIET, EXIT_ERROR, EXIT_TRIGGERED = 0, 1, 2


def _config(path, **overrides):
    return load_config(Path(path) if path else None, overrides)


def _fail(exc: Exception):
    click.echo(f"error: {exc}", err=True)
    sys.exit(EXIT_ERROR)


config_option = click.option("--config", "config_path", type=click.Path(dir_okay=False), help="engine config file")


@click.group()
@click.option("-v", "--verbose", count=True)
def main(verbose):
    """Spatio-temporal decision support engine."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


@main.command("check")
@config_option
@click.option("--at", "at_tick", type=int, required=True, help="tick to evaluate")
@click.option("--rules", "rule_file", type=click.Path(path_type=Path), help="override rule_file")
@click.option("--model", "model_files", multiple=True, type=click.Path(path_type=Path), help="override model_files")
def check_cmd(config_path, at_tick, rule_file, model_files):
    """Evaluate every rule once. Exit 0 quiet, 2 triggered, 1 error."""
    try:
        cfg = _config(config_path, rule_file=rule_file, model_files=list(model_files) or None)
        knowledge = load_knowledge(cfg)
        fired, bindings = check(knowledge, at_tick)
    except (ConfigError, ModelError) as exc:
        _fail(exc)
    click.echo(render_xml(bindings), nl=False)
    for r in fired:
        click.echo(f"triggered {r.rule_id}: {r.label}", err=True)
    sys.exit(EXIT_TRIGGERED if fired else EXIT_QUIET)


@main.command("replay")
@config_option
@click.option("--events", "events_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--weather", "weather_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--out-dir", type=click.Path(file_okay=False, path_type=Path))
@click.option("--coalesce-window", "coalesce_window_ticks", type=int)
def replay_cmd(config_path, events_file, weather_file, out_dir, coalesce_window_ticks):
    """Replay event and weather files; write per-device XML under the out dir."""
    try:
        cfg = _config(config_path, out_dir=out_dir, coalesce_window_ticks=coalesce_window_ticks)
        knowledge = load_knowledge(cfg)
    except (ConfigError, ModelError) as exc:
        _fail(exc)
    sink = DirectorySink(cfg.out_dir)
    sink.reset()
    events = events_file.read_text() if events_file else ""
    weather = weather_file.read_text() if weather_file else ""
    result = replay(knowledge, cfg, events, weather, sink)
    click.echo(result.stats.summary())


@main.command("serve")
@config_option
@click.option("--port", "listen_port", type=int, help="event listener port")
@click.option("--weather-port", type=int)
@click.option("--http-port", type=int, help="also serve the HTTP API")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--out-dir", type=click.Path(file_okay=False, path_type=Path))
def serve_cmd(config_path, listen_port, weather_port, http_port, host, out_dir):
    """Run listeners until SIGINT/SIGTERM, then drain and exit."""
    from .server import Runtime

    try:
        cfg = _config(config_path, listen_port=listen_port, weather_port=weather_port,
                      http_port=http_port, out_dir=out_dir)
        knowledge = load_knowledge(cfg)
    except (ConfigError, ModelError) as exc:
        _fail(exc)
    if cfg.listen_port is None:
        _fail(ConfigError("serve needs listen_port (config) or --port"))
    engine = Engine(knowledge, cfg, DirectorySink(cfg.out_dir))
    runtime = Runtime(engine, host=host).start(cfg.listen_port, cfg.weather_port)
    click.echo(f"listening on {host}:{runtime.ports}", err=True)
    try:
        if cfg.http_port is not None:
            import uvicorn

            from .service import create_app

            # uvicorn handles SIGINT/SIGTERM and returns
            uvicorn.run(create_app(runtime), host=host, port=cfg.http_port, log_level="warning")
        else:
            stop = threading.Event()
            for sig in (signal.SIGINT, signal.SIGTERM):
                signal.signal(sig, lambda *_: stop.set())
            stop.wait()
    finally:
        runtime.stop()
        click.echo(engine.stats.summary(), err=True)


@main.command("render")
@click.option("--in", "in_file", type=click.File("r"), default="-", help="command list (cmd/overlay lines)")
def render_cmd(in_file):
    """Render a command list to XML on stdout."""
    try:
        bindings = parse_command_lines(in_file.read())
    except CommandLineError as exc:
        _fail(exc)
    click.echo(render_xml(bindings), nl=False)


def _post_lines(url: str, path: str, source) -> None:
    import httpx

    lines = [ln for ln in source.read().splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    try:
        resp = httpx.post(url.rstrip("/") + path, json={"lines": lines}, timeout=30)
        resp.raise_for_status()
    except httpx.HTTPError as exc:
        _fail(exc)
    for reply in resp.json()["replies"]:
        click.echo(reply)


@main.command("send")
@click.option("--url", default="http://127.0.0.1:8080", show_default=True)
@click.option("--events", "events_file", type=click.File("r"))
@click.option("--weather", "weather_file", type=click.File("r"))
def send_cmd(url, events_file, weather_file):
    """Post event/weather lines to a running ``serve --http-port``."""
    if events_file is None and weather_file is None:
        _fail(click.UsageError("give --events and/or --weather"))
    if weather_file is not None:
        _post_lines(url, "/weather", weather_file)
    if events_file is not None:
        _post_lines(url, "/events", events_file)


@main.command("status")
@click.option("--url", default="http://127.0.0.1:8080", show_default=True)
def status_cmd(url):
    """Show counters of a running engine."""
    import httpx

    try:
        resp = httpx.get(url.rstrip("/") + "/status", timeout=10)
        resp.raise_for_status()
    except httpx.HTTPError as exc:
        _fail(exc)
    for key, value in resp.json().items():
        click.echo(f"{key}={value}")


if __name__ == "__main__":  # pragma: no cover
    main()
