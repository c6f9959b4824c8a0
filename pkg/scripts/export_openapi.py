"""Write the service's OpenAPI document to openapi.json at the repo root."""

import json
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from cfsynth.service import build_openapi  # noqa: E402

if __name__ == "__main__":
    out = pathlib.Path(__file__).resolve().parents[1] / "openapi.json"
    out.write_text(json.dumps(build_openapi(), indent=2) + "\n")
    print(f"wrote {out}")
