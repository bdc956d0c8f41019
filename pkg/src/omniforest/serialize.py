"""Versioned learner persistence.

Layout: an 8-byte magic, a little-endian u32 format version, the sha256 of
the compressed payload, the payload length, then the payload itself. The
payload is a zlib-compressed stream holding a JSON header (configs, task
bookkeeping, trees as nested node records, voter wiring) followed by binary
array blocks (voter count tables, OOB index sets, retained data). Posterior
tables are not stored; they are recomputed from counts and smoothing, which
reproduces them bit-for-bit.

Everything is written deterministically (sorted JSON keys, fixed zlib level),
so equal learners serialize to equal bytes.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
import zlib

import numpy as np

from .data import DataError, TaskDataset
from .forest import ForestConfig, ForestRepresenter, Internal, Leaf, Tree, TreeNode
from .learner import OmniLearner, RecruitedTreesVoter, StrategyConfig, _VoterUnit
from .seeding import SeedStream
from .voters import KnnVoter, LeafVoter, posterior_from_counts

__all__ = [
    "FORMAT_VERSION",
    "SerializationError",
    "save_model",
    "load_model",
    "learner_to_bytes",
    "learner_from_bytes",
    "representer_to_bytes",
    "voter_to_bytes",
]

MAGIC = b"OMNIFORE"
FORMAT_VERSION = 1
_ZLIB_LEVEL = 6


class SerializationError(DataError):
    """Raised for corrupt, truncated, or unsupported model files."""


def _dumps(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


class _BlockWriter:
    def __init__(self):
        self.blocks: list[bytes] = []

    def add(self, arr: np.ndarray) -> int:
        buf = io.BytesIO()
        np.save(buf, np.ascontiguousarray(arr))
        self.blocks.append(buf.getvalue())
        return len(self.blocks) - 1


def _pack(header: dict, blocks: list[bytes]) -> bytes:
    head = _dumps(header)
    out = io.BytesIO()
    out.write(struct.pack("<Q", len(head)))
    out.write(head)
    out.write(struct.pack("<Q", len(blocks)))
    for b in blocks:
        out.write(struct.pack("<Q", len(b)))
        out.write(b)
    return zlib.compress(out.getvalue(), _ZLIB_LEVEL)


def _unpack(payload: bytes) -> tuple[dict, list[np.ndarray]]:
    raw = zlib.decompress(payload)
    view = io.BytesIO(raw)

    def read_len() -> int:
        return struct.unpack("<Q", view.read(8))[0]

    header = json.loads(view.read(read_len()).decode("utf-8"))
    blocks = []
    for _ in range(read_len()):
        blocks.append(np.load(io.BytesIO(view.read(read_len())), allow_pickle=False))
    return header, blocks


# -- trees ----------------------------------------------------------------


def _node_record(node: TreeNode):
    if isinstance(node, Leaf):
        return {"leaf": node.leaf_id}
    return {
        "f": node.feature_index,
        "t": node.threshold,
        "l": _node_record(node.left),
        "r": _node_record(node.right),
    }


def _node_from_record(rec) -> TreeNode:
    if "leaf" in rec:
        return Leaf(int(rec["leaf"]))
    return Internal(
        feature_index=int(rec["f"]),
        threshold=float(rec["t"]),
        left=_node_from_record(rec["l"]),
        right=_node_from_record(rec["r"]),
    )


def _count_leaf_records(rec) -> int:
    if "leaf" in rec:
        return 1
    return _count_leaf_records(rec["l"]) + _count_leaf_records(rec["r"])


def _rep_header(rep: ForestRepresenter, blocks: _BlockWriter) -> dict:
    return {
        "source_task_id": rep.source_task_id,
        "n_features": rep.n_features,
        "trees": [_node_record(t.root) for t in rep.trees],
        "oob": [blocks.add(o.astype(np.int64)) for o in rep.oob_indices],
    }


def _rep_from_header(rec: dict, blocks: list[np.ndarray]) -> ForestRepresenter:
    trees = []
    for tree_rec in rec["trees"]:
        root = _node_from_record(tree_rec)
        trees.append(
            Tree(root=root, n_leaves=_count_leaf_records(tree_rec), n_features=rec["n_features"])
        )
    oob = tuple(blocks[i].astype(np.int64) for i in rec["oob"])
    return ForestRepresenter(
        trees=tuple(trees),
        oob_indices=oob,
        source_task_id=rec["source_task_id"],
        n_features=rec["n_features"],
    )


# -- voters ----------------------------------------------------------------


def _voter_header(voter, blocks: _BlockWriter) -> dict:
    if isinstance(voter, LeafVoter):
        return {
            "kind": "leaf",
            "target": voter.target_task_id,
            "rep_task": voter.representer_task_id,
            "class_count": voter.class_count,
            "smoothing": voter.smoothing,
            "counts": [blocks.add(c.astype(np.int64)) for c in voter.counts],
        }
    if isinstance(voter, KnnVoter):
        return {
            "kind": "knn",
            "target": voter.target_task_id,
            "rep_task": voter.representer_task_id,
            "class_count": voter.class_count,
            "k": voter.k,
            "leaf_mat": blocks.add(voter.leaf_mat.astype(np.int64)),
            "labels": blocks.add(voter.labels.astype(np.int64)),
        }
    if isinstance(voter, RecruitedTreesVoter):
        return {
            "kind": "recruited",
            "target": voter.target_task_id,
            "class_count": voter.class_count,
            "smoothing": voter.smoothing,
            "members": [list(m) for m in voter.members],
            "counts": [blocks.add(c.astype(np.int64)) for c in voter.counts],
        }
    raise SerializationError(f"cannot serialize voter of type {type(voter).__name__}")


def _voter_from_header(rec: dict, blocks: list[np.ndarray]):
    kind = rec["kind"]
    if kind == "leaf":
        counts = tuple(blocks[i].astype(np.int64) for i in rec["counts"])
        return LeafVoter(
            target_task_id=rec["target"],
            representer_task_id=rec["rep_task"],
            class_count=rec["class_count"],
            smoothing=rec["smoothing"],
            counts=counts,
            tables=tuple(posterior_from_counts(c, rec["smoothing"]) for c in counts),
        )
    if kind == "knn":
        return KnnVoter(
            target_task_id=rec["target"],
            representer_task_id=rec["rep_task"],
            class_count=rec["class_count"],
            k=rec["k"],
            leaf_mat=blocks[rec["leaf_mat"]].astype(np.int64),
            labels=blocks[rec["labels"]].astype(np.int64),
        )
    if kind == "recruited":
        counts = tuple(blocks[i].astype(np.int64) for i in rec["counts"])
        return RecruitedTreesVoter(
            target_task_id=rec["target"],
            class_count=rec["class_count"],
            smoothing=rec["smoothing"],
            members=tuple((int(r), int(b)) for r, b in rec["members"]),
            counts=counts,
            tables=tuple(posterior_from_counts(c, rec["smoothing"]) for c in counts),
        )
    raise SerializationError(f"unknown voter kind {kind!r}")


# -- learner ----------------------------------------------------------------


def learner_to_bytes(learner: OmniLearner, include_data: bool = True) -> bytes:
    blocks = _BlockWriter()
    header = {
        "configs": {
            "forest": {
                "n_estimators": learner.forest_config.n_estimators,
                "max_depth": learner.forest_config.max_depth,
                "max_samples": learner.forest_config.max_samples,
                "min_samples_leaf": learner.forest_config.min_samples_leaf,
                "split_criterion": learner.forest_config.split_criterion,
                "bootstrap_replace": learner.forest_config.bootstrap_replace,
                "max_features": learner.forest_config.max_features,
            },
            "strategy": {
                "mode": learner.strategy.mode,
                "trees_per_task": learner.strategy.trees_per_task,
                "recruit_eval_fraction": learner.strategy.recruit_eval_fraction,
                "hybrid_build_fraction": learner.strategy.hybrid_build_fraction,
            },
            "smoothing": learner.smoothing,
            "voter_kind": learner.voter_kind,
            "forward_only": learner.forward_only,
            "root_seed": list(learner.root_seed.entropy),
        },
        "n_features": learner.n_features,
        "task_ids": list(learner.task_ids),
        "class_counts": {str(t): k for t, k in learner.class_counts.items()},
        "representers": [_rep_header(r, blocks) for r in learner.representers],
        "tasks": [
            {
                "task_id": tid,
                "units": [
                    {"rep_index": u.rep_index, "voter": _voter_header(u.voter, blocks)}
                    for u in learner.task_units[tid]
                ],
            }
            for tid in learner.task_ids
        ],
        "retained": {},
    }
    if include_data:
        header["retained"] = {
            str(tid): {
                "features": blocks.add(d.features),
                "labels": blocks.add(d.labels),
                "class_count": d.class_count,
            }
            for tid, d in learner.retained_data.items()
        }
    payload = _pack(header, blocks.blocks)
    digest = hashlib.sha256(payload).digest()
    return MAGIC + struct.pack("<I", FORMAT_VERSION) + digest + struct.pack("<Q", len(payload)) + payload


def learner_from_bytes(data: bytes) -> OmniLearner:
    if len(data) < len(MAGIC) + 4 + 32 + 8:
        raise SerializationError("file too short to be a model")
    if data[: len(MAGIC)] != MAGIC:
        raise SerializationError("bad magic: not a model file")
    off = len(MAGIC)
    (version,) = struct.unpack_from("<I", data, off)
    off += 4
    if version != FORMAT_VERSION:
        raise SerializationError(
            f"unsupported format version {version} (this build reads version {FORMAT_VERSION})"
        )
    digest = data[off : off + 32]
    off += 32
    (length,) = struct.unpack_from("<Q", data, off)
    off += 8
    payload = data[off : off + length]
    if len(payload) != length:
        raise SerializationError("truncated payload")
    if hashlib.sha256(payload).digest() != digest:
        raise SerializationError("checksum mismatch: file is corrupt")
    header, blocks = _unpack(payload)

    cfg = header["configs"]
    f = cfg["forest"]
    learner = OmniLearner(
        forest_config=ForestConfig(
            n_estimators=f["n_estimators"],
            max_depth=f["max_depth"],
            max_samples=f["max_samples"],
            min_samples_leaf=f["min_samples_leaf"],
            split_criterion=f["split_criterion"],
            bootstrap_replace=f["bootstrap_replace"],
            max_features=f["max_features"],
        ),
        strategy=StrategyConfig(**cfg["strategy"]),
        smoothing=cfg["smoothing"],
        voter_kind=cfg["voter_kind"],
        forward_only=cfg["forward_only"],
        seed=SeedStream(tuple(cfg["root_seed"])),
    )
    learner.n_features = header["n_features"]
    learner.task_ids = list(header["task_ids"])
    learner.class_counts = {int(t): k for t, k in header["class_counts"].items()}
    learner.representers = [_rep_from_header(r, blocks) for r in header["representers"]]
    learner.task_units = {
        rec["task_id"]: [
            _VoterUnit(u["rep_index"], _voter_from_header(u["voter"], blocks))
            for u in rec["units"]
        ]
        for rec in header["tasks"]
    }
    learner.retained_data = {
        int(tid): TaskDataset(
            features=blocks[rec["features"]],
            labels=blocks[rec["labels"]],
            task_id=int(tid),
            class_count=rec["class_count"],
        )
        for tid, rec in header["retained"].items()
    }
    return learner


def save_model(learner: OmniLearner, path: str, include_data: bool = True) -> None:
    with open(path, "wb") as fh:
        fh.write(learner_to_bytes(learner, include_data=include_data))


def load_model(path: str) -> OmniLearner:
    with open(path, "rb") as fh:
        return learner_from_bytes(fh.read())


# -- per-component canonical bytes (used by the no-forgetting checks) -------


def representer_to_bytes(rep: ForestRepresenter) -> bytes:
    blocks = _BlockWriter()
    return _pack(_rep_header(rep, blocks), blocks.blocks)


def voter_to_bytes(voter) -> bytes:
    blocks = _BlockWriter()
    return _pack(_voter_header(voter, blocks), blocks.blocks)
