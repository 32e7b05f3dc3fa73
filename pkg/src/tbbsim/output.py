"""Deterministic CSV / JSON / SVG emission.

Floating-point values are written with 17 significant digits, '.' decimal
separator and LF line endings, so identical runs produce byte-identical
files at any worker count.
"""

from __future__ import annotations

import hashlib
import json
import os

__all__ = ["fmt", "write_csv", "write_manifest", "write_phase_svg",
           "sha256_file"]


def fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def write_csv(path, header, rows):
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, command, config_text, derived, files,
                   elapsed_s, extra=None):
    """JSON manifest: config echo, version, derived quantities, file
    inventory with checksums, wall-clock timing."""
    from . import __version__
    manifest = {
        "tool": "tbbsim",
        "version": __version__,
        "command": command,
        "config": config_text,
        "derived": derived,
        "files": [
            {"name": name, "sha256": sha256_file(os.path.join(out_dir, name))}
            for name in files
        ],
        "wall_clock_s": elapsed_s,
    }
    if extra:
        manifest.update(extra)
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _color(t):
    # dark blue (T=0) to yellow (T=1), loosely viridis-like endpoints
    t = min(max(t, 0.0), 1.0)
    r = int(68 + (253 - 68) * t)
    g = int(1 + (231 - 1) * t)
    b = int(84 + (37 - 84) * t)
    return f"#{r:02x}{g:02x}{b:02x}"


def write_phase_svg(path, pmap, cell_px=6):
    """Rectangular-cell heatmap of the highest stable transmittance;
    bistable cells are drawn white."""
    n_rep, n_eta = pmap.shape
    w, h = n_eta * cell_px, n_rep * cell_px
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}">'
    ]
    from .phase import Phase
    for i in range(n_rep):
        for j in range(n_eta):
            cell = pmap.cell(i, j)
            if cell.phase is Phase.BISTABLE:
                color = "#ffffff"
            else:
                t_max = cell.transmittances[-1] if cell.transmittances else 0.0
                color = _color(t_max)
            # row 0 (lowest repump value) at the bottom
            y = (n_rep - 1 - i) * cell_px
            parts.append(f'<rect x="{j * cell_px}" y="{y}" '
                         f'width="{cell_px}" height="{cell_px}" '
                         f'fill="{color}"/>')
    parts.append("</svg>")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(parts) + "\n")
