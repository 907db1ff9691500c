"""Daylight RGB-D -> paired low-light RGB-D, single pair and batch.

Every pair is synthesized from its own seed,
``per_image_seed = mix(global_seed, key(source_id))``, where the key is a
64-bit digest of the RGB path as written in the input manifest.  Outputs
of one record therefore never depend on which other records are present
or on the order in which workers finish.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from nightforge.assets import AssetCatalog, AugmentConfig, augment_asset, load_catalog, resize_bilinear, sample_asset
from nightforge.errors import DimMismatch, InvalidConfig, InvalidDims, InvalidManifest, NightforgeError
from nightforge.flare import (
    CameraIntrinsics,
    FlareConfig,
    FlareDraw,
    LightPlacement,
    compose_flare,
    render_source,
    sample_flare_draw,
    sample_placement,
)
from nightforge.fusion import illumination_guidance
from nightforge.imageio import pfm_bytes, png16_bytes, read_image, read_pfm, read_png, sha256_file
from nightforge.noise import ORIENTATIONS, NoiseModel, NoiseModelRanges, apply_noise, sample_noise_model

log = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1
PRESET_518 = (518, 518)
MANIFEST_NAME = "manifest.jsonl"
CONFIG_NAME = "config.yaml"
REPORT_NAME = "run_report.json"


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def record_key(source_id: str) -> int:
    return int.from_bytes(hashlib.blake2b(source_id.encode(), digest_size=8).digest(), "little")


def mix_seed(global_seed: int, key: int) -> int:
    return splitmix64(splitmix64(global_seed & MASK64) ^ (key & MASK64))


def per_image_seed(global_seed: int, source_id: str) -> int:
    return mix_seed(global_seed, record_key(source_id))


@dataclass(frozen=True)
class DepthMap:
    depth: np.ndarray  # (H, W) meters

    def __post_init__(self):
        if self.depth.ndim != 2:
            raise InvalidDims(f"depth must be (H, W), got {self.depth.shape}")

    @property
    def valid(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return np.isfinite(self.depth) & (self.depth > 0)

    @property
    def shape(self):
        return self.depth.shape


@dataclass(frozen=True)
class PipelineConfig:
    asset_dir: str = ""
    output_dir: str = ""
    global_seed: int = 0
    target_resolution: tuple[int, int] | None = None
    orientation: str = "row"
    emit_guidance: bool = False
    intrinsics: CameraIntrinsics | None = None
    depth_png_scale: float = 1000.0  # 16-bit depth PNG units per meter
    flare: FlareConfig = field(default_factory=FlareConfig)
    noise: NoiseModelRanges = field(default_factory=NoiseModelRanges)
    augment: AugmentConfig = field(default_factory=AugmentConfig)

    def __post_init__(self):
        if self.orientation not in ORIENTATIONS:
            raise InvalidConfig(f"orientation must be one of {ORIENTATIONS}")
        if self.target_resolution is not None:
            h, w = self.target_resolution
            if h < 1 or w < 1:
                raise InvalidConfig(f"target_resolution must be positive, got {self.target_resolution}")
        if not 0 <= self.global_seed <= MASK64:
            raise InvalidConfig("global_seed must be an unsigned 64-bit integer")
        if self.depth_png_scale <= 0:
            raise InvalidConfig("depth_png_scale must be positive")

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        data = dict(data or {})
        nested = {"flare": FlareConfig, "noise": NoiseModelRanges, "augment": AugmentConfig}
        kwargs = {}
        for name, value in data.items():
            if name not in {f.name for f in dataclasses.fields(cls)}:
                raise InvalidConfig(f"unknown config key {name!r}")
            if name in nested:
                kwargs[name] = _build(nested[name], value or {}, name)
            elif name == "intrinsics":
                kwargs[name] = None if value is None else _build(CameraIntrinsics, value, name)
            elif name == "target_resolution":
                if value == "518" or value == 518:
                    value = PRESET_518
                kwargs[name] = None if value is None else tuple(int(v) for v in value)
            else:
                kwargs[name] = value
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise InvalidConfig(str(exc)) from exc

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)

    def digest(self) -> str:
        """SHA-256 of everything that influences pixel values (paths excluded)."""
        d = self.to_dict()
        d.pop("output_dir")
        d.pop("asset_dir")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _build(cls, value: dict, section: str):
    if not isinstance(value, dict):
        raise InvalidConfig(f"section {section!r} must be a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(value) - names
    if unknown:
        raise InvalidConfig(f"unknown keys in {section!r}: {sorted(unknown)}")
    kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in value.items()}
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise InvalidConfig(f"{section}: {exc}") from exc


def load_config(path) -> PipelineConfig:
    try:
        data = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise InvalidConfig(f"cannot read config {path}: {exc}") from exc
    if data is not None and not isinstance(data, dict):
        raise InvalidConfig("config file must hold a mapping")
    return PipelineConfig.from_dict(data or {})


def save_config(path, cfg: PipelineConfig) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))


@dataclass
class NightPair:
    source_id: str
    day_rgb: np.ndarray
    night_rgb: np.ndarray
    guidance: np.ndarray | None
    depth: DepthMap
    draw: FlareDraw
    noise: NoiseModel
    per_image_seed: int
    flare_rgb: np.ndarray
    placements: list[LightPlacement] = field(default_factory=list)
    asset_ids: list[str] = field(default_factory=list)


def synthesize_pair(
    day_rgb: np.ndarray,
    depth: DepthMap,
    cfg: PipelineConfig,
    per_image_seed: int,
    catalog: AssetCatalog | None = None,
    source_id: str = "",
) -> NightPair:
    """Flare simulation followed by noise simulation for one daylight frame."""
    day_rgb = np.asarray(day_rgb, dtype=np.float32)
    if day_rgb.ndim != 3 or day_rgb.shape[2] != 3:
        raise InvalidDims(f"day image must be (H, W, 3), got {day_rgb.shape}")
    if day_rgb.min() < 0 or day_rgb.max() > 1 or not np.all(np.isfinite(day_rgb)):
        raise ValueError("day image must lie in [0, 1]")
    if not isinstance(depth, DepthMap):
        depth = DepthMap(np.asarray(depth))
    h, w = day_rgb.shape[:2]
    if depth.shape != (h, w):
        raise DimMismatch(f"depth {depth.shape} does not match image {(h, w)}")
    if catalog is None:
        catalog = load_catalog(cfg.asset_dir)

    flare_ss, noise_ss = np.random.SeedSequence(per_image_seed).spawn(2)
    frng = np.random.default_rng(flare_ss)
    draw = sample_flare_draw(cfg.flare, frng)
    intr = cfg.intrinsics or CameraIntrinsics.default_for(h, w)
    placements, asset_ids = [], []

    def contributions():
        for _ in range(draw.n_f):
            asset = augment_asset(sample_asset(catalog, frng), (h, w), frng, cfg.augment)
            placement = sample_placement(intr, (h, w), cfg.flare, frng)
            asset_ids.append(asset.id)
            placements.append(placement)
            yield render_source(
                asset, placement, draw.s_f, (h, w), cfg.flare.z_ref, cfg.flare.depth_attenuation
            )

    flare_rgb = compose_flare(day_rgb, contributions(), draw)
    model = sample_noise_model(cfg.noise, np.random.default_rng(noise_ss))
    night = apply_noise(flare_rgb, model, cfg.orientation)
    guidance = illumination_guidance(night).astype(np.float32) if cfg.emit_guidance else None
    return NightPair(
        source_id=source_id,
        day_rgb=day_rgb,
        night_rgb=night,
        guidance=guidance,
        depth=DepthMap(depth.depth.copy()),
        draw=draw,
        noise=model,
        per_image_seed=per_image_seed,
        flare_rgb=flare_rgb,
        placements=placements,
        asset_ids=asset_ids,
    )


# ---------------------------------------------------------------------------
# batch driver


@dataclass(frozen=True)
class InputRecord:
    index: int
    source_id: str
    rgb_path: Path
    depth_path: Path


def read_input_manifest(path) -> list[InputRecord]:
    """Parse ``rgb_path<TAB>depth_path`` lines; blank lines and ``#`` comments are skipped.

    Relative paths resolve against the manifest's directory.
    """
    path = Path(path).resolve()
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise InvalidManifest(f"cannot read {path}: {exc}") from exc
    records = []
    for lineno, line in enumerate(lines, 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not all(p.strip() for p in parts):
            raise InvalidManifest(f"{path}:{lineno}: expected rgb_path<TAB>depth_path")
        rgb, dep = (p.strip() for p in parts)
        records.append(InputRecord(len(records), rgb, path.parent / rgb, path.parent / dep))
    if not records:
        raise InvalidManifest(f"{path} lists no records")
    return records


def read_depth(path, png_scale: float = 1000.0) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() == ".png":
        return read_png(path)[..., 0] * np.float32(65535.0 / png_scale)
    return read_pfm(path)[..., 0]


def load_inputs(rec: InputRecord, cfg: PipelineConfig):
    rgb = read_image(rec.rgb_path)
    if rgb.shape[2] == 1:
        rgb = np.repeat(rgb, 3, axis=2)
    rgb = np.clip(rgb, 0.0, 1.0)
    depth = read_depth(rec.depth_path, cfg.depth_png_scale)
    if depth.shape != rgb.shape[:2]:
        raise DimMismatch(f"{rec.source_id}: depth {depth.shape} vs rgb {rgb.shape[:2]}")
    if cfg.target_resolution is not None:
        th, tw = cfg.target_resolution
        rgb = resize_bilinear(rgb, (th, tw))
        # nearest neighbour: never blend depths across object boundaries
        ri = (np.arange(th) * depth.shape[0]) // th
        ci = (np.arange(tw) * depth.shape[1]) // tw
        depth = depth[ri][:, ci]
    return np.ascontiguousarray(rgb, dtype=np.float32), DepthMap(np.ascontiguousarray(depth))


def output_stem(source_id: str) -> str:
    return f"{Path(source_id).stem}_{record_key(source_id):016x}"


def encode_outputs(pair: NightPair) -> dict[str, tuple[str, bytes]]:
    stem = output_stem(pair.source_id)
    files = {
        "night": (f"{stem}_night.png", png16_bytes(pair.night_rgb)),
        "depth": (f"{stem}_depth.pfm", pfm_bytes(pair.depth.depth)),
    }
    if pair.guidance is not None:
        files["guidance"] = (f"{stem}_guidance.pfm", pfm_bytes(pair.guidance))
    return files


def _record_entry(rec: InputRecord, pair: NightPair, files, cfg_digest: str) -> dict:
    return {
        "index": rec.index,
        "source_id": rec.source_id,
        "rgb_path": str(rec.rgb_path),
        "depth_path": str(rec.depth_path),
        "outputs": {k: name for k, (name, _) in files.items()},
        "sha256": {k: hashlib.sha256(data).hexdigest() for k, (_, data) in files.items()},
        "per_image_seed": pair.per_image_seed,
        "draw": dataclasses.asdict(pair.draw),
        "noise": dataclasses.asdict(pair.noise),
        "assets": pair.asset_ids,
        "placements": [[p.u, p.v, p.z] for p in pair.placements],
        "config_digest": cfg_digest,
    }


_WORKER_CATALOG: AssetCatalog | None = None


def _init_worker(asset_dir: str):
    global _WORKER_CATALOG
    _WORKER_CATALOG = load_catalog(asset_dir)


def _process(rec: InputRecord, cfg: PipelineConfig, catalog: AssetCatalog | None = None):
    """Synthesize and write one record.  Returns (entry, None) or (None, error text)."""
    catalog = catalog or _WORKER_CATALOG
    out_dir = Path(cfg.output_dir)
    written = []
    try:
        rgb, depth = load_inputs(rec, cfg)
        seed = per_image_seed(cfg.global_seed, rec.source_id)
        pair = synthesize_pair(rgb, depth, cfg, seed, catalog, rec.source_id)
        files = encode_outputs(pair)
        for name, data in files.values():
            target = out_dir / name
            written.append(target)
            target.write_bytes(data)
        return _record_entry(rec, pair, files, cfg.digest()), None
    except (NightforgeError, OSError, ValueError) as exc:
        for p in written:
            p.unlink(missing_ok=True)
        return None, f"{type(exc).__name__}: {exc}"


@dataclass
class RunResult:
    records: list[dict]
    failures: list[dict]
    manifest_path: Path | None

    @property
    def ok(self) -> bool:
        return not self.failures


class StrictFailure(NightforgeError):
    def __init__(self, failures):
        self.failures = failures
        super().__init__(f"{len(failures)} record(s) failed in strict mode")


def run_dataset(input_manifest, cfg: PipelineConfig, strict: bool = False, workers: int = 1) -> RunResult:
    """Synthesize every record of ``input_manifest`` into ``cfg.output_dir``.

    Per-record failures are logged and left out of the manifest; with
    ``strict`` the run stops without writing a manifest and raises
    :class:`StrictFailure`.
    """
    records = read_input_manifest(input_manifest)
    if not cfg.output_dir:
        raise InvalidConfig("output_dir is not set")
    cfg = cfg.replace(
        asset_dir=str(Path(cfg.asset_dir).resolve()), output_dir=str(Path(cfg.output_dir).resolve())
    )
    catalog = load_catalog(cfg.asset_dir)
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / MANIFEST_NAME).unlink(missing_ok=True)
    save_config(out_dir / CONFIG_NAME, cfg)

    if workers > 1:
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(cfg.asset_dir,)) as pool:
            results = list(pool.map(_process, records, [cfg] * len(records)))
    else:
        results = [_process(rec, cfg, catalog) for rec in records]

    entries, failures = [], []
    for rec, (entry, err) in zip(records, results):
        if err is None:
            entries.append(entry)
        else:
            log.warning("record %d (%s) failed: %s", rec.index, rec.source_id, err)
            failures.append({"index": rec.index, "source_id": rec.source_id, "error": err})

    report = {
        "n_records": len(records),
        "n_written": len(entries),
        "failures": failures,
        "config_digest": cfg.digest(),
        "strict": strict,
    }
    (out_dir / REPORT_NAME).write_text(json.dumps(report, indent=2) + "\n")
    if strict and failures:
        raise StrictFailure(failures)

    manifest_path = out_dir / MANIFEST_NAME
    with open(manifest_path, "w") as f:
        for entry in entries:
            f.write(json.dumps(entry, sort_keys=True) + "\n")
    return RunResult(entries, failures, manifest_path)


def read_manifest(path) -> list[dict]:
    path = Path(path)
    try:
        return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidManifest(f"cannot read manifest {path}: {exc}") from exc


@dataclass
class VerifyReport:
    n_files: int
    drift: list[dict]

    @property
    def ok(self) -> bool:
        return not self.drift


def verify_manifest(path, regenerate: bool = False) -> VerifyReport:
    """Re-hash every output listed in the manifest.

    With ``regenerate`` each pair is also re-synthesized from its source
    files and the run's saved config, and the fresh bytes are compared.
    """
    path = Path(path)
    entries = read_manifest(path)
    out_dir = path.parent
    drift, n_files = [], 0
    cfg = catalog = None
    if regenerate:
        cfg = load_config(out_dir / CONFIG_NAME)
        catalog = load_catalog(cfg.asset_dir)
    for e in entries:
        for kind, name in e["outputs"].items():
            n_files += 1
            target = out_dir / name
            if not target.exists():
                drift.append({"file": name, "reason": "missing"})
            elif sha256_file(target) != e["sha256"][kind]:
                drift.append({"file": name, "reason": "hash mismatch"})
        if regenerate:
            rec = InputRecord(e["index"], e["source_id"], Path(e["rgb_path"]), Path(e["depth_path"]))
            if cfg.digest() != e["config_digest"]:
                drift.append({"file": e["source_id"], "reason": "config digest changed"})
                continue
            rgb, depth = load_inputs(rec, cfg)
            pair = synthesize_pair(rgb, depth, cfg, e["per_image_seed"], catalog, e["source_id"])
            for kind, (name, data) in encode_outputs(pair).items():
                if hashlib.sha256(data).hexdigest() != e["sha256"].get(kind):
                    drift.append({"file": name, "reason": "regenerated bytes differ"})
    return VerifyReport(n_files, drift)

