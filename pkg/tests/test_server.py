import socket
import threading

from conftest import FIXTURES

from sitewatch.engine import DirectorySink, Engine, MemorySink, load_knowledge
from sitewatch.notification import parse_xml, split_xml_documents
from sitewatch.server import Runtime


def talk(port, lines):
    with socket.create_connection(("127.0.0.1", port), timeout=5) as s:
        f = s.makefile("rw", encoding="utf-8", newline="\n")
        replies = []
        for line in lines:
            f.write(line + "\n")
            f.flush()
            replies.append(f.readline().strip())
        return replies


def start(cfg, sink, batch_seconds=0.05):
    engine = Engine(load_knowledge(cfg), cfg, sink)
    return Runtime(engine, batch_seconds=batch_seconds).start(0, 0)


def test_one_alarm_one_batch(fixture_config):
    cfg = fixture_config()
    runtime = start(cfg, DirectorySink(cfg.out_dir))
    event_port, _ = runtime.ports
    try:
        assert talk(event_port, ["evt src=door-9 t=700 cat=door-open"]) == ["ok door-9-000001"]
    finally:
        runtime.stop()
    docs = split_xml_documents((cfg.out_dir / "broadcast.xml").read_text())
    assert len(docs) == 1 and parse_xml(docs[0])[0].command.id == "door-9-000001"


def test_malformed_then_continue(fixture_config):
    runtime = start(fixture_config(), MemorySink())
    event_port, weather_port = runtime.ports
    try:
        replies = talk(event_port, ["evt src=a t=x cat=alarm", "evt src=a t=1 cat=alarm"])
        assert replies[0].startswith("err malformed") and replies[1] == "ok a-000001"
        assert talk(weather_port, ["wx t=1 kind=cloud box=0,0,1,1", "nonsense"])[0] == "ok"
    finally:
        runtime.stop()
    assert runtime.engine.stats.weather_cells == 1 and runtime.engine.stats.weather_skipped == 1


def test_backpressure_reply(fixture_config):
    runtime = start(fixture_config(queue_capacity=1), MemorySink(), batch_seconds=60)
    try:
        assert talk(runtime.ports[0], ["evt src=a t=1 cat=x", "evt src=a t=1 cat=x"]) == [
            "ok a-000001", "err backpressure"]
    finally:
        runtime.stop()


def test_shutdown_flushes_every_accepted_event(fixture_config):
    sink = MemorySink()
    runtime = start(fixture_config(model_files=[FIXTURES / "empty_model.txt"]), sink, batch_seconds=0.01)
    port = runtime.ports[0]
    accepted = []

    def flood(src):
        replies = talk(port, [f"evt src={src} t={i} cat=c{i}" for i in range(200)])
        accepted.extend(r.split()[1] for r in replies if r.startswith("ok"))

    threads = [threading.Thread(target=flood, args=(f"s{k}",)) for k in range(3)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    runtime.stop()
    emitted = [b.command.id for batch in sink.batches for b in batch]
    assert len(accepted) == 600
    assert sorted(emitted) == sorted(accepted)
