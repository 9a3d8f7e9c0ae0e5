"""Dataset directory layout: manifest.json, images/NNNNNN.pgm (binary
P5, 8-bit), annotations/NNNNNN.json. Reading back what was written is
bit-exact at the 8-bit image quantization."""

import json
import os

import numpy as np

from .scenes import EllipseInstance, GenConfig, Scene

FORMAT_VERSION = "1"


class DataError(IOError):
    """Missing or malformed dataset file; message names the path."""


def _index_name(i):
    return f"{i:06d}"


def write_pgm(path, image):
    """8-bit binary P5; intensities quantized as round(255 * value)."""
    arr = np.rint(np.asarray(image, dtype=float) * 255.0).astype(np.uint8)
    h, w = arr.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(arr.tobytes())


def read_pgm(path):
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise DataError(f"cannot read image file {path}: {e}") from e
    if not blob.startswith(b"P5"):
        raise DataError(f"{path}: not a binary PGM (P5) file")
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise DataError(f"{path}: truncated PGM header")
        fields.append(blob[start:pos])
    pos += 1  # single whitespace after maxval
    try:
        w, h, maxval = (int(x) for x in fields)
    except ValueError as e:
        raise DataError(f"{path}: bad PGM header") from e
    if maxval != 255:
        raise DataError(f"{path}: unsupported maxval {maxval}")
    data = blob[pos : pos + w * h]
    if len(data) != w * h:
        raise DataError(f"{path}: truncated PGM payload")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w) / 255.0


def write_dataset(out_dir, scenes, images, config=None):
    """Write scenes/images under out_dir; returns the manifest dict."""
    if len(scenes) != len(images):
        raise ValueError("scenes and images must have equal length")
    os.makedirs(out_dir, exist_ok=True)
    os.makedirs(os.path.join(out_dir, "images"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "annotations"), exist_ok=True)
    if scenes:
        size = [scenes[0].height, scenes[0].width]
    elif config is not None:
        size = [config.height, config.width]
    else:
        size = [0, 0]
    manifest = {
        "format_version": FORMAT_VERSION,
        "n_scenes": len(scenes),
        "image_size": size,
        "config": config.to_dict() if config is not None else None,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    for i, (scene, image) in enumerate(zip(scenes, images)):
        name = _index_name(i)
        write_pgm(os.path.join(out_dir, "images", name + ".pgm"), image)
        ann = {
            "seed": scene.seed,
            "instances": [inst.to_dict() for inst in scene.instances],
        }
        with open(os.path.join(out_dir, "annotations", name + ".json"), "w") as f:
            json.dump(ann, f, sort_keys=True)
            f.write("\n")
    return manifest


def read_manifest(dataset_dir):
    path = os.path.join(dataset_dir, "manifest.json")
    try:
        with open(path) as f:
            manifest = json.load(f)
    except OSError as e:
        raise DataError(f"cannot read manifest {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise DataError(f"malformed manifest {path}: {e}") from e
    if manifest.get("format_version") != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported format_version")
    return manifest


def read_dataset(dataset_dir):
    """Load (scenes, images, manifest); verifies the manifest count."""
    manifest = read_manifest(dataset_dir)
    n = int(manifest["n_scenes"])
    height, width = (int(x) for x in manifest["image_size"])
    scenes = []
    images = []
    for i in range(n):
        name = _index_name(i)
        ann_path = os.path.join(dataset_dir, "annotations", name + ".json")
        img_path = os.path.join(dataset_dir, "images", name + ".pgm")
        if not os.path.exists(ann_path):
            raise DataError(f"missing annotation file {ann_path}")
        try:
            with open(ann_path) as f:
                ann = json.load(f)
        except json.JSONDecodeError as e:
            raise DataError(f"malformed annotation file {ann_path}: {e}") from e
        insts = [EllipseInstance.from_dict(d) for d in ann["instances"]]
        scenes.append(
            Scene(width=width, height=height, instances=insts, seed=int(ann["seed"]))
        )
        images.append(read_pgm(img_path))
    extra = _index_name(n) + ".json"
    if os.path.exists(os.path.join(dataset_dir, "annotations", extra)):
        raise DataError(
            f"manifest of {dataset_dir} declares {n} scenes but more annotation files exist"
        )
    return scenes, images, manifest


def dataset_config(manifest):
    """GenConfig recorded in a manifest, or None."""
    cfg = manifest.get("config")
    return GenConfig.from_dict(cfg) if cfg else None
