from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional

# tools/ 아래에서 직접 실행할 때도 emtriage 패키지를 찾도록
sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from emtriage.errors import CorpusError  # noqa: E402
from emtriage.utils.corpus import load_manifest, verify_corpus  # noqa: E402
from emtriage.utils.storage import format_bytes  # noqa: E402


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(description="emtriage 코퍼스 manifest ↔ 디스크 일치 검사")
    parser.add_argument("corpus", help="코퍼스 루트 또는 manifest.tsv 경로")
    parser.add_argument("--quiet", action="store_true", help="문제 목록 대신 개수만 출력")
    args = parser.parse_args(argv)

    try:
        manifest = load_manifest(args.corpus)
    except CorpusError as e:
        print(f"[ERROR] {e}", file=sys.stderr)
        return 1

    problems = verify_corpus(manifest)
    if problems:
        if not args.quiet:
            for p in problems:
                print(f"[MISMATCH] {p}")
        print(f"[FAIL] {len(problems)} problem(s) in {manifest.root}")
        return 3

    print(f"[PASS] {len(manifest)} traces, {format_bytes(manifest.total_bytes)} ({manifest.root})")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
