"""End-to-end commands over an experiment directory.

Layout under ``<output_dir>/<name>/``::

    tiles/        manifest.tsv and per-tile rasters and masks
    checkpoints/  change-detection, VSE and embedding checkpoints
    candidates/   candidate keyword lists
    annotations/  ranked keywords per tile
    reports/      metric and recall tables
"""

from __future__ import annotations

import logging
from pathlib import Path

from . import synthgen
from .cdnet import ENCODER_KINDS, ModelSpec, TrainConfig, build_model, load_model, predict_mask, train
from .checkpoint import load_checkpoint, save_checkpoint
from .config import config_header, experiment_dir, require_paths, write_config
from .errors import ConfigError, DataError
from .evalmetrics import dataset_metrics
from .imagery import (
    ManifestRecord, SplitSpec, load_pair, load_raster, normalize, read_mask, split_tiles,
    tile_mask, tile_scene, write_btr, write_manifest, write_mask, read_manifest,
)
from .textcorpus import (
    extract_keywords, load_corpus, load_embedding_table, read_candidates, save_table,
    save_text_table, train_embeddings, write_candidates, write_corpus,
)
from .vse import (
    VSETrainConfig, annotate, embed_pair, evaluate_retrieval, label_for_mask,
    load_vse, train_vse, write_annotations, write_recall_report, RecallRow,
)

log = logging.getLogger(__name__)

SUBDIRS = ("tiles", "checkpoints", "candidates", "annotations", "reports")


def layout(cfg: dict) -> dict[str, Path]:
    root = experiment_dir(cfg)
    return {"root": root, **{name: root / name for name in SUBDIRS}}


def _mkdir(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    return path


def _header(cfg: dict, **extra) -> list[str]:
    return config_header(cfg, **extra)


# --------------------------------------------------------------------------
# Imagery


def cmd_synth(cfg: dict, size: int = 1024, seed: int = 0, n_pre: int = 8, n_new: int = 12,
              radius: tuple[float, float] = (10.0, 30.0), noise: float = 0.02,
              corpus_docs: int = 60) -> Path:
    """Write a synthetic scene pair, mask and corpus, point the config at them, then tile."""
    root = _mkdir(layout(cfg)["root"])
    scenes = _mkdir(root / "scenes")
    t1, t2, mask = synthgen.generate_pair(
        synthgen.SynthConfig(seed, (size, size), n_pre, n_new, radius, noise))
    write_btr(scenes / "t1.btr", t1.pixels)
    write_btr(scenes / "t2.btr", t2.pixels)
    write_mask(scenes / "mask.png", mask)
    write_corpus(synthgen.synthetic_corpus(corpus_docs, seed=seed), scenes / "corpus.jsonl")
    paths = cfg["paths"]
    paths["scene_id"] = [f"synth{seed}"]
    paths["scene_t1"] = [str(scenes / "t1.btr")]
    paths["scene_t2"] = [str(scenes / "t2.btr")]
    paths["scene_mask"] = [str(scenes / "mask.png")]
    paths["corpus"] = str(scenes / "corpus.jsonl")
    return cmd_tile(cfg)


def cmd_tile(cfg: dict) -> Path:
    """Tile every configured scene pair and write ``tiles/manifest.tsv``.

    The resolved config is saved as ``config.ini`` in the experiment directory.
    """
    p, im = cfg["paths"], cfg["imagery"]
    t1s, t2s, masks = p["scene_t1"], p["scene_t2"], p["scene_mask"]
    if not t1s or len(t1s) != len(t2s):
        raise ConfigError("paths.scene_t1 and paths.scene_t2 must list the same number of scenes (>= 1)")
    if masks and len(masks) != len(t1s):
        raise ConfigError("paths.scene_mask must be empty or list one mask per scene")
    ids = p["scene_id"] or [f"scene{i}" for i in range(len(t1s))]
    if len(ids) != len(t1s):
        raise ConfigError("paths.scene_id must list one id per scene")
    require_paths(*t1s, *t2s, *masks)

    tiles_dir = _mkdir(layout(cfg)["tiles"])
    size = im["tile_size"]
    records = []
    for i, scene_id in enumerate(ids):
        a = load_raster(t1s[i], im["bands"], scene_id)
        b = load_raster(t2s[i], im["bands"], scene_id)
        if a.shape != b.shape:
            raise DataError(f"scene {scene_id}: t1 shape {a.shape} != t2 shape {b.shape}")
        if im["normalize"]:
            a, b = normalize(a), normalize(b)
        ta, tb = tile_scene(a, size), tile_scene(b, size)
        tm = [None] * len(ta)
        if masks:
            m = read_mask(masks[i])
            if m.shape != a.shape[:2]:
                raise DataError(f"scene {scene_id}: mask shape {m.shape} != raster {a.shape[:2]}")
            tm = tile_mask(m, size, scene_id)
        out = _mkdir(tiles_dir / scene_id)
        for x, y, m in zip(ta, tb, tm):
            stem = x.tile_id.split("/", 1)[1]
            write_btr(out / f"{stem}_t1.btr", x.pixels)
            write_btr(out / f"{stem}_t2.btr", y.pixels)
            mask_rel = ""
            if m is not None:
                write_mask(out / f"{stem}_mask.png", m.pixels[:, :, 0])
                mask_rel = f"{scene_id}/{stem}_mask.png"
            records.append(ManifestRecord(x.tile_id, "", f"{scene_id}/{stem}_t1.btr",
                                          f"{scene_id}/{stem}_t2.btr", mask_rel))
    if not records:
        raise DataError(f"no tiles: every scene is smaller than tile_size={size}")
    train_ids, _ = split_tiles([r.tile_id for r in records], SplitSpec(im["train_fraction"], im["seed"]))
    chosen = set(train_ids)
    for r in records:
        r.split = "train" if r.tile_id in chosen else "test"
    write_config(cfg, layout(cfg)["root"] / "config.ini")
    path = tiles_dir / "manifest.tsv"
    write_manifest(path, records, _header(cfg, seed=im["seed"]))
    log.info("wrote %d tiles (%d train) to %s", len(records), len(train_ids), path)
    return path


def load_split(cfg: dict, split: str, require_masks: bool = True):
    tiles_dir = layout(cfg)["tiles"]
    manifest = tiles_dir / "manifest.tsv"
    if not manifest.is_file():
        raise ConfigError(f"no tile manifest at {manifest}; run 'tile' first")
    records = [r for r in read_manifest(manifest) if split == "all" or r.split == split]
    if not records:
        raise DataError(f"manifest {manifest} has no '{split}' tiles")
    if require_masks:
        missing = [r.tile_id for r in records if not r.path_mask]
        if missing:
            raise DataError(f"manifest records without masks: {missing[:5]}")
    im = cfg["imagery"]
    return [load_pair(r, tiles_dir, im["t1_date"], im["t2_date"]) for r in records]


# --------------------------------------------------------------------------
# Change detection


def _cd_checkpoint(cfg: dict, encoder: str) -> Path:
    return layout(cfg)["checkpoints"] / f"cdnet-{encoder}.ckpt"


def _encoders(cfg: dict, sweep: bool) -> list[str]:
    return list(ENCODER_KINDS) if sweep else [cfg["cdnet"]["encoder"]]


def cmd_train_cd(cfg: dict, sweep: bool = False) -> list[Path]:
    c = cfg["cdnet"]
    pairs = load_split(cfg, "train")
    tcfg = TrainConfig(c["epochs"], c["learning_rate"], c["batch_size"], c["seed"])
    out = []
    for enc in _encoders(cfg, sweep):
        spec = ModelSpec(enc, pairs[0].input.shape[-1], attention=c["attention"])
        model = build_model(spec, seed=c["seed"])
        ckpt = train(model, pairs, tcfg, extra={"config": cfg, "seed": c["seed"]})
        out.append(save_checkpoint(ckpt, _mkdir(layout(cfg)["checkpoints"]) / f"cdnet-{enc}.ckpt"))
    return out


def cmd_eval_cd(cfg: dict, sweep: bool = False, checkpoint=None) -> Path:
    """Micro-averaged test-split metrics, one row per checkpoint."""
    pairs = load_split(cfg, "test")
    paths = [Path(checkpoint)] if checkpoint else [_cd_checkpoint(cfg, e) for e in _encoders(cfg, sweep)]
    require_paths(*paths)
    gts = [p.mask for p in pairs]
    rows = ["model\tencoder\tprecision\trecall\tf1\tiou"]
    for path in paths:
        ckpt = load_checkpoint(path)
        model = load_model(ckpt)
        preds = predict_mask(model, pairs, cfg["cdnet"]["threshold"])
        m = dataset_metrics(zip(preds, gts))
        rows.append(f"{path.stem}\t{ckpt.model_spec['encoder_kind']}\t"
                    f"{m.precision:.6f}\t{m.recall:.6f}\t{m.f1:.6f}\t{m.iou:.6f}")
    report = _mkdir(layout(cfg)["reports"]) / "cd_metrics.tsv"
    lines = [f"# {h}" for h in _header(cfg, seed=cfg["cdnet"]["seed"])] + rows
    report.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return report


# --------------------------------------------------------------------------
# Text side


def table_path(cfg: dict) -> Path:
    """Configured pre-trained table, else the experiment's trained one."""
    if cfg["paths"]["table"]:
        return Path(cfg["paths"]["table"])
    return layout(cfg)["checkpoints"] / "embeddings.npz"


def _load_corpus(cfg: dict):
    require_paths(cfg["paths"]["corpus"])
    return load_corpus(cfg["paths"]["corpus"])


def cmd_train_embed(cfg: dict) -> Path:
    e = cfg["embeddings"]
    corpus = _load_corpus(cfg)
    table = train_embeddings(corpus, dim=e["dim"], window=e["window"], negatives=e["negatives"],
                             min_count=e["min_count"], ngram_range=(e["min_n"], e["max_n"]),
                             epochs=e["epochs"], seed=e["seed"], learning_rate=e["learning_rate"])
    table.metadata["config"] = cfg
    ckdir = _mkdir(layout(cfg)["checkpoints"])
    save_table(table, ckdir / "embeddings.npz")
    save_text_table(table, ckdir / "embeddings.vec")
    return ckdir / "embeddings.npz"


def _load_table(cfg: dict):
    path = table_path(cfg)
    require_paths(path)
    return load_embedding_table(path)


def candidates_path(cfg: dict) -> Path:
    stem = Path(cfg["paths"]["corpus"]).stem or "corpus"
    return layout(cfg)["candidates"] / f"{stem}.tsv"


def cmd_extract_keywords(cfg: dict) -> Path:
    corpus = _load_corpus(cfg)
    table = _load_table(cfg)
    k = cfg["keywords"]
    cands = extract_keywords(corpus, table, k["k"], k["min_df"])
    path = _mkdir(layout(cfg)["candidates"]) / candidates_path(cfg).name
    write_candidates(cands, path, _header(cfg, table=table.source))
    return path


# --------------------------------------------------------------------------
# Visual-semantic embedding


def model_name(cfg: dict) -> str:
    return cfg["retrieval"]["model_name"] or f"vse-{table_path(cfg).stem}"


def _labelled(cfg: dict, split: str):
    v = cfg["vse"]
    return [(p, label_for_mask(p.mask, v["min_positive_fraction"], v["positive_label"], v["negative_label"]))
            for p in load_split(cfg, split)]


def cmd_train_vse(cfg: dict) -> Path:
    v = cfg["vse"]
    table = _load_table(cfg)
    pairs = _labelled(cfg, "train")
    spec = ModelSpec(v["encoder"], pairs[0][0].input.shape[-1])
    init = None
    if v["warm_start"]:
        require_paths(v["warm_start"])
        cd = load_checkpoint(v["warm_start"])
        if cd.model_spec["encoder_kind"] != v["encoder"]:
            raise ConfigError(f"warm_start encoder {cd.model_spec['encoder_kind']} != vse.encoder {v['encoder']}")
        init = {k[len("encoder."):]: w for k, w in cd.weights.items() if k.startswith("encoder.")}
    tcfg = VSETrainConfig(v["epochs"], v["learning_rate"], v["batch_size"], v["seed"], v["dropout"], v["hidden"])
    ckpt = train_vse(pairs, table, tcfg, spec, init, extra={"config": cfg, "seed": v["seed"]})
    return save_checkpoint(ckpt, _mkdir(layout(cfg)["checkpoints"]) / f"{model_name(cfg)}.ckpt")


def _vse_checkpoint(cfg: dict, checkpoint=None) -> Path:
    path = Path(checkpoint) if checkpoint else layout(cfg)["checkpoints"] / f"{model_name(cfg)}.ckpt"
    require_paths(path)
    return path


def _candidates(cfg: dict, candidates=None):
    path = Path(candidates) if candidates else candidates_path(cfg)
    require_paths(path)
    return read_candidates(path)


def cmd_annotate(cfg: dict, checkpoint=None, candidates=None, split: str = "test") -> Path:
    ckpt_path = _vse_checkpoint(cfg, checkpoint)
    model = load_vse(load_checkpoint(ckpt_path))
    cands = _candidates(cfg, candidates)
    table = _load_table(cfg)
    pairs = load_split(cfg, split, require_masks=False)
    queries = embed_pair(model, pairs)
    name = ckpt_path.stem
    results = [annotate(q, cands, table, cfg["retrieval"]["top_n"], p.tile_id, name)
               for q, p in zip(queries, pairs)]
    path = _mkdir(layout(cfg)["annotations"]) / f"{name}.jsonl"
    write_annotations(results, path, _header(cfg, seed=cfg["vse"]["seed"]))
    return path


def applicable_ks(ks, n_candidates: int) -> list[int]:
    """Drop k values that cannot discriminate (k >= candidate count), keeping k=1."""
    return [k for k in ks if k == 1 or k < n_candidates]


def cmd_eval_vse(cfg: dict, checkpoint=None, candidates=None) -> Path:
    """Recall@k on the test split for the keyword candidates and for the bare label pair."""
    ckpt_path = _vse_checkpoint(cfg, checkpoint)
    model = load_vse(load_checkpoint(ckpt_path))
    cands = _candidates(cfg, candidates)
    table = _load_table(cfg)
    pairs = _labelled(cfg, "test")
    v = cfg["vse"]
    label_set = [v["positive_label"], v["negative_label"]]
    rows: list[RecallRow] = []
    for cset, name in ((cands, cands.corpus_name), (label_set, "labels")):
        ks = applicable_ks(cfg["retrieval"]["ks"], len(list(cset)))
        rows += evaluate_retrieval(model, pairs, cset, table, ks, ckpt_path.stem, name)
    path = _mkdir(layout(cfg)["reports"]) / f"recall_{ckpt_path.stem}.tsv"
    write_recall_report(rows, path, _header(cfg, seed=v["seed"]))
    return path


def cmd_report(cfg: dict) -> str:
    """Concatenate every table in ``reports/`` (comment lines stripped) into summary.txt."""
    reports = layout(cfg)["reports"]
    if not reports.is_dir():
        raise ConfigError(f"no reports directory at {reports}")
    parts = []
    for path in sorted(reports.glob("*.tsv")):
        body = [l for l in path.read_text(encoding="utf-8").splitlines() if not l.startswith("#")]
        parts.append(f"== {path.name}\n" + "\n".join(body))
    text = "\n\n".join(parts) + "\n"
    (reports / "summary.txt").write_text(text, encoding="utf-8")
    return text
