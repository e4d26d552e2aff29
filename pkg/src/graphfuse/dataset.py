"""Pair discovery on disk: ``ir/`` + ``vis/`` directories or a TSV manifest."""

from pathlib import Path

from .errors import DataError
from .image import load_image, to_gray

IMAGE_SUFFIXES = {".png", ".bmp"}


def image_files(directory):
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"{directory}: not a directory")
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def pair_directories(ir_dir, vis_dir, match="name"):
    """Return sorted ``(name, ir_path, vis_path)`` triples.

    ``match="name"`` pairs identical filenames; ``match="stem"`` ignores the
    extension. Files present on one side only are reported together.
    """
    def keyed(paths):
        return {(p.name if match == "name" else p.stem): p for p in paths}

    ir = keyed(image_files(ir_dir))
    vis = keyed(image_files(vis_dir))
    orphans = sorted(set(ir) ^ set(vis))
    if orphans:
        raise DataError("unpaired files: " + ", ".join(
            f"{n} (only in {'ir' if n in ir else 'vis'})" for n in orphans))
    if not ir:
        raise DataError(f"no images found in {ir_dir} / {vis_dir}")
    return [(name, ir[name], vis[name]) for name in sorted(ir)]


def read_pair_manifest(path):
    """Lines of ``name<TAB>ir_path<TAB>vis_path``; relative paths resolve
    against the manifest's directory."""
    path = Path(path)
    base = path.parent
    pairs = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise DataError(f"{path}:{lineno}: expected name<TAB>ir<TAB>vis")
        name, ir, vis = parts
        pairs.append((name, base / ir, base / vis))
    if not pairs:
        raise DataError(f"{path}: manifest lists no pairs")
    return pairs


def list_pairs(data):
    """Pairs under a prepared dataset root (``ir/`` + ``vis/``) or a manifest file."""
    data = Path(data)
    if data.is_file():
        return read_pair_manifest(data)
    return pair_directories(data / "ir", data / "vis")


def load_gray_pairs(pairs):
    return [(to_gray(load_image(ir)), to_gray(load_image(vis))) for _, ir, vis in pairs]
