import requests

from shared.notifier import Notifier


class _Response:
    def __init__(self, status_code, text=""):
        self.status_code = status_code
        self.text = text


def test_missing_url_skips(capsys):
    assert Notifier("train", "학습").send("완료") is False
    assert "WEBHOOK_URL_TRAIN" in capsys.readouterr().out


def test_url_read_at_send_time(monkeypatch):
    notifier = Notifier("bench", "벤치마크")
    calls = []
    monkeypatch.setenv("WEBHOOK_URL_BENCH", "https://example.invalid/hook")
    monkeypatch.setattr(requests, "post", lambda url, json, timeout: calls.append((url, json)) or _Response(200))
    assert notifier.send_summary("완료", {"행": 2, "소요": "1초"})
    url, body = calls[0]
    assert url == "https://example.invalid/hook"
    assert body["text"] == "[벤치마크] 완료\n행: 2\n소요: 1초"


def test_http_error_and_exception(monkeypatch):
    monkeypatch.setenv("WEBHOOK_URL_EXPORT", "https://example.invalid/hook")
    notifier = Notifier("export", "내보내기")
    monkeypatch.setattr(requests, "post", lambda *a, **k: _Response(500, "boom"))
    assert notifier.send("실패") is False

    def fail(*a, **k):
        raise requests.ConnectionError("down")

    monkeypatch.setattr(requests, "post", fail)
    assert notifier.send("실패") is False
