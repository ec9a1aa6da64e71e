"""
I/Q 저장 용량 계산 유틸리티
"""
import math

from emtriage.errors import InvalidArgumentError
from emtriage.models import BYTES_PER_SAMPLE, StorageBudget

# 기준 수집 설정 (HackRF 최대 샘플레이트, 1분 수집)
REFERENCE_RATE_HZ = 20e6
REFERENCE_DURATION_S = 60.0


def storage_budget(sample_rate_hz, duration_s):
    """
    샘플레이트와 수집 시간으로 저장 용량 계산

    Args:
        sample_rate_hz: 샘플레이트 (Hz)
        duration_s: 수집 시간 (초)

    Returns:
        StorageBudget: total_bytes = 8 × floor(rate × duration)
    """
    if not sample_rate_hz > 0:
        raise InvalidArgumentError(f"sample_rate_hz는 양수여야 합니다: {sample_rate_hz}")
    if duration_s < 0:
        raise InvalidArgumentError(f"duration_s는 음수일 수 없습니다: {duration_s}")

    # 부동소수 오차(예: 0.1 × 3e6)로 한 샘플이 빠지지 않도록 아주 작은 여유를 둔다
    n_samples = int(math.floor(sample_rate_hz * duration_s + 1e-9))
    return StorageBudget(
        sample_rate_hz=float(sample_rate_hz),
        duration_s=float(duration_s),
        n_samples=n_samples,
        total_bytes=BYTES_PER_SAMPLE * n_samples,
    )


def savings_fraction(source_rate_hz, target_rate_hz):
    """다운샘플링으로 절약되는 저장 공간 비율 (20 MHz → 4 MHz = 0.8)"""
    if not (0 < target_rate_hz <= source_rate_hz):
        raise InvalidArgumentError(f"0 < target({target_rate_hz}) <= source({source_rate_hz}) 이어야 합니다")
    return 1.0 - target_rate_hz / source_rate_hz


def format_bytes(n_bytes):
    """바이트 수를 읽기 쉬운 형식으로 변환 (이진 단위)"""
    if n_bytes >= 1024 ** 3:
        return f"{n_bytes / 1024 ** 3:.2f} GiB"
    elif n_bytes >= 1024 ** 2:
        return f"{n_bytes / 1024 ** 2:.2f} MiB"
    elif n_bytes >= 1024:
        return f"{n_bytes / 1024:.2f} KiB"
    else:
        return f"{n_bytes} B"


def describe_budget(budget):
    """'9,600,000,000 bytes = 9.60 GB (decimal) = 8.94 GiB (binary)'"""
    return (
        f"{budget.total_bytes:,} bytes = {budget.gb:.2f} GB (decimal) "
        f"= {budget.gib:.2f} GiB (binary)"
    )
