"""Visualization commands, device binding, and the XML command format."""
from __future__ import annotations

import logging
import shlex
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field, replace
from decimal import Decimal, InvalidOperation
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple, Union

log = logging.getLogger(__name__)

Number = Union[Decimal, float, int, str]

CAPABILITIES = frozenset({"banner", "display", "image", "map", "earth"})


def _decimal(value: Number) -> Decimal:
    if isinstance(value, Decimal):
        return value
    try:
        return Decimal(str(value))
    except InvalidOperation:
        raise ValueError(f"not a decimal number: {value!r}") from None


def _check_coords(lat: Decimal, long: Decimal):
    if not Decimal(-90) <= lat <= Decimal(90):
        raise ValueError(f"latitude {lat} outside [-90, 90]")
    if not Decimal(-180) <= long <= Decimal(180):
        raise ValueError(f"longitude {long} outside [-180, 180]")


@dataclass(frozen=True)
class Rect:
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 0 or self.h < 0:
            raise ValueError("overlay width and height must be >= 0")


@dataclass(frozen=True)
class Text:
    text: str
    x: int
    y: int
    color: Optional[str] = None


Overlay = Union[Rect, Text]


@dataclass(frozen=True)
class EventBanner:
    category: str
    id: str

    kind = "banner"


@dataclass(frozen=True)
class Display:
    profile: str

    kind = "display"


@dataclass(frozen=True)
class CompositeImage:
    image: str
    overlays: Tuple[Overlay, ...] = ()

    kind = "image"

    def __post_init__(self):
        object.__setattr__(self, "overlays", tuple(self.overlays))


@dataclass(frozen=True)
class MapView:
    lat: Decimal
    long: Decimal
    zoom: str

    kind = "map"

    def __post_init__(self):
        object.__setattr__(self, "lat", _decimal(self.lat))
        object.__setattr__(self, "long", _decimal(self.long))
        _check_coords(self.lat, self.long)


@dataclass(frozen=True)
class EarthView:
    lat: Decimal
    long: Decimal
    height: str

    kind = "earth"

    def __post_init__(self):
        object.__setattr__(self, "lat", _decimal(self.lat))
        object.__setattr__(self, "long", _decimal(self.long))
        _check_coords(self.lat, self.long)


VisualizationCommand = Union[EventBanner, Display, CompositeImage, MapView, EarthView]


@dataclass(frozen=True)
class DeviceBinding:
    command: VisualizationCommand
    device: Optional[str] = None
    extras: Tuple[Tuple[str, str], ...] = ()


@dataclass(frozen=True)
class DeviceRegistry:
    devices: Dict[str, FrozenSet[str]]
    default: str

    def __post_init__(self):
        if self.default not in self.devices:
            raise ValueError(f"default device {self.default!r} not in registry")
        for dev, caps in self.devices.items():
            unknown = set(caps) - CAPABILITIES
            if unknown:
                raise ValueError(f"device {dev!r} has unknown capabilities {sorted(unknown)}")

    @classmethod
    def single(cls, device: str = "default") -> "DeviceRegistry":
        return cls({device: CAPABILITIES}, device)

    def supports(self, device: Optional[str], kind: str) -> bool:
        return device in self.devices and kind in self.devices[device]


def bind_devices(
    commands: Sequence[VisualizationCommand], targets: Sequence, registry: DeviceRegistry
) -> List[DeviceBinding]:
    """Bind commands to each target's device, falling back to the registry default.

    ``targets`` are stakeholder profiles (anything with a ``device`` attribute).
    With no targets, commands pass through device-independent.
    """
    if not targets:
        return [DeviceBinding(cmd) for cmd in commands]
    out = []
    for target in targets:
        for cmd in commands:
            dev = target.device if registry.supports(target.device, cmd.kind) else registry.default
            out.append(DeviceBinding(cmd, dev))
    return out


# -- XML ----------------------------------------------------------------------


def _esc(value: str) -> str:
    return (
        value.replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
        .replace('"', "&quot;")
        .replace("\n", "&#10;")
        .replace("\r", "&#13;")
        .replace("\t", "&#9;")
    )


def _attrs(pairs: Iterable[Tuple[str, object]]) -> str:
    return "".join(f' {k}="{_esc(str(v))}"' for k, v in pairs)


def command_attributes(cmd: VisualizationCommand) -> List[Tuple[str, object]]:
    if isinstance(cmd, EventBanner):
        return [("type", "event"), ("category", cmd.category), ("id", cmd.id)]
    if isinstance(cmd, Display):
        return [("type", "display"), ("profile", cmd.profile)]
    if isinstance(cmd, CompositeImage):
        return [("type", "composite_image"), ("image", cmd.image)]
    if isinstance(cmd, MapView):
        return [("type", "map"), ("lat", cmd.lat), ("long", cmd.long), ("zoom", cmd.zoom)]
    if isinstance(cmd, EarthView):
        return [("type", "earth"), ("lat", cmd.lat), ("long", cmd.long), ("height", cmd.height)]
    raise TypeError(f"not a visualization command: {cmd!r}")


def overlay_attributes(ov: Overlay) -> List[Tuple[str, object]]:
    if isinstance(ov, Rect):
        return [("type", "rect"), ("x", ov.x), ("y", ov.y), ("w", ov.w), ("h", ov.h)]
    pairs = [("type", "text"), ("text", ov.text), ("x", ov.x), ("y", ov.y)]
    if ov.color is not None:
        pairs.append(("color", ov.color))
    return pairs


def render_xml(bindings: Sequence[DeviceBinding]) -> str:
    """Serialize bindings as an ``<output>`` document; byte-deterministic."""
    if not bindings:
        return "<output></output>\n"
    lines = ["<output>"]
    for b in bindings:
        pairs = [("device", b.device)] if b.device is not None else []
        pairs += command_attributes(b.command)
        pairs += list(b.extras)
        head = f"  <command{_attrs(pairs)}>"
        if isinstance(b.command, CompositeImage) and b.command.overlays:
            lines.append(head)
            for ov in b.command.overlays:
                lines.append(f"    <display{_attrs(overlay_attributes(ov))}></display>")
            lines.append("  </command>")
        else:
            lines.append(head + "</command>")
    lines.append("</output>")
    return "\n".join(lines) + "\n"


class XmlError(ValueError):
    def __init__(self, position, detail: str):
        self.position = position
        super().__init__(f"{detail} at {position}")


class UnknownCommandType(ValueError):
    def __init__(self, type_: str):
        self.type = type_
        super().__init__(f"unknown command type {type_!r}")


_KNOWN = {
    "event": {"type", "device", "category", "catagory", "id"},
    "display": {"type", "device", "profile"},
    "composite_image": {"type", "device", "image"},
    "view": {"type", "device", "image", "rectx", "recty", "rectw", "recth", "text", "txtx", "txty", "color"},
    "map": {"type", "device", "lat", "long", "zoom"},
    "earth": {"type", "device", "lat", "long", "height"},
}


def _int(attrs: dict, key: str, where) -> int:
    try:
        return int(attrs[key])
    except KeyError:
        raise XmlError(where, f"missing attribute {key!r}") from None
    except ValueError:
        raise XmlError(where, f"attribute {key!r} is not an integer") from None


def _req(attrs: dict, key: str, where) -> str:
    try:
        return attrs[key]
    except KeyError:
        raise XmlError(where, f"missing attribute {key!r}") from None


def _parse_overlay(el: ET.Element, where) -> Overlay:
    a = el.attrib
    kind = a.get("type")
    if kind == "rect":
        return Rect(_int(a, "x", where), _int(a, "y", where), _int(a, "w", where), _int(a, "h", where))
    if kind == "text":
        return Text(_req(a, "text", where), _int(a, "x", where), _int(a, "y", where), a.get("color"))
    raise XmlError(where, f"unknown overlay type {kind!r}")


def _parse_command(el: ET.Element, index: int) -> DeviceBinding:
    where = f"command {index}"
    a = dict(el.attrib)
    kind = a.get("type")
    if kind not in _KNOWN:
        raise UnknownCommandType(kind if kind is not None else "")
    try:
        if kind == "event":
            category = a.get("category", a.get("catagory"))
            if category is None:
                raise XmlError(where, "missing attribute 'category'")
            cmd = EventBanner(category, _req(a, "id", where))
        elif kind == "display":
            cmd = Display(_req(a, "profile", where))
        elif kind == "composite_image":
            overlays = [_parse_overlay(c, f"{where} overlay {i}")
                        for i, c in enumerate(x for x in el if x.tag == "display")]
            cmd = CompositeImage(_req(a, "image", where), tuple(overlays))
        elif kind == "view":
            # legacy flat form: one rect and one text carried as attributes
            overlays = []
            if "rectx" in a:
                overlays.append(Rect(_int(a, "rectx", where), _int(a, "recty", where),
                                     _int(a, "rectw", where), _int(a, "recth", where)))
            if "text" in a:
                overlays.append(Text(a["text"], _int(a, "txtx", where), _int(a, "txty", where), a.get("color")))
            cmd = CompositeImage(_req(a, "image", where), tuple(overlays))
        elif kind == "map":
            cmd = MapView(_req(a, "lat", where), _req(a, "long", where), _req(a, "zoom", where))
        else:
            cmd = EarthView(_req(a, "lat", where), _req(a, "long", where), _req(a, "height", where))
    except ValueError as exc:
        if isinstance(exc, XmlError):
            raise
        raise XmlError(where, str(exc)) from None
    extras = tuple((k, v) for k, v in a.items() if k not in _KNOWN[kind])
    return DeviceBinding(cmd, a.get("device"), extras)


def parse_xml(text: str) -> List[DeviceBinding]:
    """Inverse of :func:`render_xml`.

    Also reads the older flat ``view`` form and ``catagory`` spelling.
    Commands nested inside a non-composite command are read as following
    siblings.
    """
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise XmlError(exc.position, "malformed XML") from None
    if root.tag != "output":
        raise XmlError((1, 0), f"root element is <{root.tag}>, expected <output>")
    out: List[DeviceBinding] = []

    def visit(parent: ET.Element):
        for el in parent:
            if el.tag != "command":
                continue
            out.append(_parse_command(el, len(out)))
            if el.attrib.get("type") != "composite_image":
                visit(el)

    visit(root)
    return out


def split_xml_documents(text: str) -> List[str]:
    """Split an appended device stream into its ``<output>`` documents."""
    docs = []
    rest = text
    while True:
        start = rest.find("<output>")
        if start < 0:
            return docs
        end = rest.find("</output>", start)
        if end < 0:
            raise XmlError(len(text) - len(rest) + start, "unterminated <output>")
        end += len("</output>")
        docs.append(rest[start:end])
        rest = rest[end:]


# -- line format for command lists ---------------------------------------------
#
#   cmd [device=<id>] type=<kind> key=value ...
#   overlay type=rect x=.. y=.. w=.. h=..        (attaches to the previous composite_image)
#   overlay type=text text="..." x=.. y=.. [color=..]


class CommandLineError(ValueError):
    def __init__(self, lineno: int, detail: str):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {detail}")


def _fields(tokens: Sequence[str], lineno: int) -> Dict[str, str]:
    out = {}
    for tok in tokens:
        key, sep, value = tok.partition("=")
        if not sep or not key:
            raise CommandLineError(lineno, f"expected key=value, got {tok!r}")
        out[key] = value
    return out


def command_from_fields(fields: Dict[str, str]) -> VisualizationCommand:
    """Build a command (without overlays) from ``type`` plus attribute fields."""
    el = ET.Element("command", {k: v for k, v in fields.items()})
    return _parse_command(el, 0).command


def overlay_from_fields(fields: Dict[str, str]) -> Overlay:
    return _parse_overlay(ET.Element("display", dict(fields)), "overlay")


def with_overlay(binding: DeviceBinding, overlay: Overlay) -> DeviceBinding:
    cmd = binding.command
    if not isinstance(cmd, CompositeImage):
        raise ValueError("overlay without a preceding composite_image")
    return replace(binding, command=replace(cmd, overlays=cmd.overlays + (overlay,)))


def parse_command_lines(text: str) -> List[DeviceBinding]:
    bindings: List[DeviceBinding] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        try:
            tokens = shlex.split(stripped)
        except ValueError as exc:
            raise CommandLineError(lineno, str(exc)) from None
        head, fields = tokens[0], _fields(tokens[1:], lineno)
        try:
            if head == "cmd":
                device = fields.pop("device", None)
                bindings.append(DeviceBinding(command_from_fields(fields), device))
            elif head == "overlay":
                if not bindings:
                    raise CommandLineError(lineno, "overlay without a preceding composite_image")
                bindings[-1] = with_overlay(bindings[-1], overlay_from_fields(fields))
            else:
                raise CommandLineError(lineno, f"unknown record {head!r}")
        except CommandLineError:
            raise
        except ValueError as exc:
            raise CommandLineError(lineno, str(exc)) from None
    return bindings


def parse_registry(text: str) -> DeviceRegistry:
    """Registry records: ``device id=<id> caps=map,earth [default=true]``."""
    devices: Dict[str, FrozenSet[str]] = {}
    default = None
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        tokens = shlex.split(stripped)
        if tokens[0] != "device":
            raise CommandLineError(lineno, f"unknown record {tokens[0]!r}")
        f = _fields(tokens[1:], lineno)
        if "id" not in f:
            raise CommandLineError(lineno, "device record needs id=")
        caps = frozenset(c for c in f.get("caps", "").split(",") if c)
        devices[f["id"]] = caps
        if f.get("default", "").lower() in ("1", "true", "yes"):
            default = f["id"]
    if not devices:
        return DeviceRegistry.single()
    if default is None:
        default = next(iter(devices))
    return DeviceRegistry(devices, default)
