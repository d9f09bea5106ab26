"""Regenerate the frontend's golden fixtures from the reference implementation.

The studio's client-side lighting math must match the service texel for
texel; these fixtures pin that equivalence in the vitest suite.
"""

import json
from pathlib import Path

import numpy as np

from videorelight.lighting import PointLight, build_preset_library, project_point_lights

FIXTURES = Path(__file__).resolve().parents[1] / "frontend" / "src" / "__tests__" / "fixtures"

CASES = [
    [{"direction": [0.0, 0.0, 1.0], "distance": 0.5, "color": [1.0, 1.0, 1.0]}],
    [{"direction": [0.6, 0.0, 0.8], "distance": 1.5, "color": [0.9, 0.4, 0.1]}],
    [{"direction": [0.0, 1.0, 0.0], "distance": 0.25, "color": [0.2, 0.8, 0.5]},
     {"direction": [-0.707106781186547, 0.0, -0.707106781186547], "distance": 1.0,
      "color": [0.5, 0.5, 1.0]}],
]


def main() -> None:
    FIXTURES.mkdir(parents=True, exist_ok=True)
    cases = []
    for lights in CASES:
        projected = project_point_lights([
            PointLight(np.asarray(l["direction"]), l["distance"],
                       np.asarray(l["color"]))
            for l in lights])
        cases.append({"lights": lights,
                      "values": [float(v) for v in projected.flat()]})
    (FIXTURES / "pointlight_golden.json").write_text(json.dumps(cases))

    presets = build_preset_library()
    subset = {name: [float(v) for v in presets[name].flat()]
              for name in ("front-key", "uniform-white")}
    (FIXTURES / "presets_golden.json").write_text(json.dumps(subset))
    print(f"wrote fixtures to {FIXTURES}")


if __name__ == "__main__":
    main()
