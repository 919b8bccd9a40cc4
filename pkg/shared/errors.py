"""
LipKernel 공통 예외

모든 라이브러리 예외는 LipKernelError를 상속합니다.
CLI(main.py)는 LipKernelError(와 파일 OSError)를 잡아서 진단 메시지 출력 후 종료 코드 1을 반환합니다.
"""


class LipKernelError(Exception):
    """LipKernel 예외 베이스"""


# ─── 선형대수 / 미분 ─────────────────────────────────────────

class NotPositiveDefinite(LipKernelError):
    """Cholesky 피벗이 0 이하 (jitter 재시도 후에도 실패)"""


class NoConvergence(LipKernelError):
    """고유값 계산이 수렴하지 않음"""


class NonPowerOfTwo(LipKernelError):
    """FFT 입력 크기가 2의 거듭제곱이 아님"""


class ShapeMismatch(LipKernelError):
    """연산 피연산자 shape 불일치"""


class NotScalarLoss(LipKernelError):
    """backward 대상이 스칼라가 아님"""


# ─── 상태공간 ───────────────────────────────────────────────

class StridedInput(LipKernelError):
    """stride > 1 커널을 직접 실현하려 함 (space_to_depth 먼저)"""


class StructureViolation(LipKernelError):
    """Roesser 고정 블록(A11, A21, A22, B2, C1)이 규정 구조에서 벗어남"""


class ChannelMismatch(LipKernelError):
    """입력 채널 수와 커널 채널 수 불일치"""


class NotDivisible(LipKernelError):
    """공간 크기가 stride로 나누어떨어지지 않음"""


# ─── 파라미터화 / 인증 ───────────────────────────────────────

class TooFewRows(LipKernelError):
    """cayley_tall 입력 행 수가 열 수보다 작음"""


class ChainMismatch(LipKernelError):
    """연속 레이어 간 GainFactor 크기 또는 대각 플래그 불일치"""


class InvalidGeometry(LipKernelError):
    """풀링 window/stride 조합 오류"""


# ─── 데이터 / 파일 포맷 ──────────────────────────────────────

class BadMagic(LipKernelError):
    """파일 매직 넘버 불일치"""


class CountMismatch(LipKernelError):
    """이미지 수와 라벨 수 불일치"""


class TruncatedFile(LipKernelError):
    """파일이 헤더에 선언된 길이보다 짧음"""


class DataNotFound(LipKernelError):
    """데이터 디렉토리에 IDX 파일이 없음"""


class VersionMismatch(LipKernelError):
    """모델 파일 포맷 버전 불일치"""


class ChecksumMismatch(LipKernelError):
    """모델 파일 payload CRC32 불일치"""


# ─── CLI / 설정 / 학습 ───────────────────────────────────────

class ArchSyntaxError(LipKernelError):
    """아키텍처 문자열 문법 오류 (position: 0-based 문자 위치)"""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (위치 {position})")
        self.position = position


class ArchShapeError(LipKernelError):
    """아키텍처 채널/공간 크기 체인 오류"""


class InvalidSpec(LipKernelError):
    """벤치마크 스펙 오류"""


class InvalidConfig(LipKernelError):
    """학습 설정 오류"""


class DivergedLoss(LipKernelError):
    """손실이 NaN/inf로 발산"""
