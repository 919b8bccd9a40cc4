import os
from typing import Dict, Optional

import requests


class Notifier:
    """
    장시간 작업(학습 / 내보내기 / 벤치마크) 완료를 웹훅으로 알립니다.

    사용법:
        notifier = Notifier(task_key="TRAIN", task_name="LipKernel 학습")
        notifier.send(status="완료", details="epoch 3, test acc 0.97")
        notifier.send_summary("실패", {"오류": "NotPositiveDefinite"})

    환경변수:
        WEBHOOK_URL_{task_key} (예: WEBHOOK_URL_TRAIN). 없으면 경고만 출력하고 작업은 계속됩니다.
    """

    def __init__(self, task_key: str, task_name: str, timeout: float = 10.0):
        self.task_key = task_key.upper()
        self.task_name = task_name
        self.timeout = timeout

    @property
    def webhook_url(self) -> Optional[str]:
        return os.environ.get(f"WEBHOOK_URL_{self.task_key}")

    def send(self, status: str, details: str = "") -> bool:
        """
        Returns:
            전송 성공 여부 (URL 미설정 / HTTP 오류 / 예외는 False)
        """
        if not self.webhook_url:
            print(f"[Warning] WEBHOOK_URL_{self.task_key} 환경변수가 설정되지 않아 알림을 건너뜁니다.")
            return False

        message = f"[{self.task_name}] {status}"
        if details:
            message += f"\n{details}"

        try:
            resp = requests.post(self.webhook_url, json={"text": message}, timeout=self.timeout)
            if resp.status_code >= 400:
                print(f"[Error] 알림 전송 실패: {resp.status_code} {resp.text}")
                return False
            print(f"[{self.task_name}] 알림 전송 성공")
            return True
        except requests.RequestException as e:
            print(f"[Error] 알림 전송 중 예외 발생: {e}")
            return False

    def send_summary(self, status: str, fields: Optional[Dict[str, object]] = None) -> bool:
        """key: value 줄로 된 요약 전송"""
        details = "\n".join(f"{k}: {v}" for k, v in (fields or {}).items())
        return self.send(status, details)
