"""Regenerate the bundled end-to-end fixture.

Writes tests/fixtures/synthetic20.jsonl (the 20-mention corpus built by
tests/fakes.py) and tests/fixtures/synthetic20.cassette.json, a cassette
recorded by driving the real CLI against the deterministic fake server.
Three runs share the cassette so the replay tests can exercise the
default pipeline and both CLI-reachable ablations without a network.

Run from the repository root:

    python3 scripts/gen_e2e_fixture.py
"""

import os
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "tests"))

from elink import cli  # noqa: E402
from elink.cassette import Cassette, CassetteMode, RecordingTransport  # noqa: E402
from elink.corpus import dump_dataset  # noqa: E402
from fakes import FakeUpstream, fixture_documents  # noqa: E402

FIXTURE_DIR = ROOT / "tests" / "fixtures"
DATASET = FIXTURE_DIR / "synthetic20.jsonl"
CASSETTE = FIXTURE_DIR / "synthetic20.cassette.json"


def main() -> int:
    # replay resolves endpoints from env or defaults; record with the defaults
    for name in ("LLM_BASE_URL", "LLM_MODEL", "KG_BASE_URL", "EMBED_BASE_URL"):
        os.environ.pop(name, None)
    os.environ["LLM_API_KEY"] = "local-test"

    FIXTURE_DIR.mkdir(parents=True, exist_ok=True)
    docs = fixture_documents()
    dump_dataset(docs, DATASET)
    print(f"wrote {DATASET} ({sum(len(d.mentions) for d in docs)} mentions)")

    CASSETTE.unlink(missing_ok=True)  # record from scratch, never append
    cassette = Cassette(str(CASSETTE), CassetteMode.RECORD)
    upstream = FakeUpstream()

    def patched_open_transport(path, mode, **kwargs):
        return RecordingTransport(upstream, cassette), cassette

    original = cli.open_transport
    cli.open_transport = patched_open_transport
    try:
        runs = [
            ("default", []),
            ("no-candidate-filter", ["--ablate", "no-candidate-filter"]),
            ("no-multiple-choice", ["--ablate", "no-multiple-choice"]),
        ]
        with tempfile.TemporaryDirectory() as tmp:
            for name, extra in runs:
                out_dir = os.path.join(tmp, name)
                argv = [
                    "link",
                    "--dataset",
                    str(DATASET),
                    "--output-dir",
                    out_dir,
                    "--record",
                    "--cassette",
                    str(CASSETTE),
                    *extra,
                ]
                code = cli.main(argv)
                if code != 0:
                    raise SystemExit(f"run {name!r} exited with {code}")
                print(f"recorded run {name!r} ({upstream.calls} upstream calls so far)")
    finally:
        cli.open_transport = original

    entries = len(cassette.entries)
    print(f"wrote {CASSETTE} ({entries} entries)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
