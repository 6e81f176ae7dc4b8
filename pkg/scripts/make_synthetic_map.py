"""Regenerate the bundled synthetic WKT road map."""

import argparse
from pathlib import Path

from pnesim.geo import build_graph, to_wkt
from pnesim.synthmap import CENTER, synthetic_map

DEFAULT_OUT = Path(__file__).resolve().parents[1] / "src" / "pnesim" / "data" / "synthetic_map.wkt"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=DEFAULT_OUT)
    args = ap.parse_args()
    lines = synthetic_map()
    # blast centre marker first, then roads
    args.out.write_text(f"POINT ({CENTER.x!r} {CENTER.y!r})\n" + to_wkt(lines))
    g = build_graph(lines)
    print(f"wrote {args.out}: {len(g.vertices)} vertices, {len(g.edges)} edges")


if __name__ == "__main__":
    main()
