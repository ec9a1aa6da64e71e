"""
기본 에미터 프로파일 초기화 스크립트
profiles/high_end.profile, profiles/low_end.profile 파일을 생성합니다.
"""
import sys

from emtriage import create_app
from emtriage.utils.profiles import builtin_profiles, save_profile


def init_profiles(overwrite: bool = False) -> int:
    cfg = create_app()
    cfg.PROFILES_DIR.mkdir(parents=True, exist_ok=True)

    for name, profile in builtin_profiles().items():
        path = cfg.PROFILES_DIR / f'{name}.profile'
        if path.exists() and not overwrite:
            print(f'프로파일이 이미 존재합니다: {path}')
            continue
        save_profile(profile, path)
        print(f'[OK] {path} ({len(profile.classes)} classes)')
    return 0


if __name__ == '__main__':
    sys.exit(init_profiles(overwrite='--overwrite' in sys.argv[1:]))
