"""LLM-as-judge adapter: prompt construction, HTTP transport, parsing, caching.

The judge sees which steps belong to a phase and what they are called, never
the ordering rules. Network access goes through a ``transport`` callable so
the evaluation suite can run against recorded responses.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .core import find_json_object, sorted_codes
from .errors import JudgeUnavailable, ParseFailure
from .rulespec import RuleSet

logger = logging.getLogger(__name__)

TEMPLATE_VERSION = "judge-v1"

PROMPT_TEMPLATE = """\
You are an experienced bariatric surgeon reviewing a surgical plan.

Target phase: {phase_name}
{phase_description}
Steps that belong to this phase (listed by code, not in any particular order):
{step_list}

Candidate step sequence, in the order it would be performed:
{sequence}

Decide whether carrying out these steps in this order would achieve the goal of the target phase.
Answer with a single JSON object and nothing else:
{{"valid": true or false, "explanation": "<one or two sentences>"}}
"""

TEMPLATE_HASH = hashlib.sha256(PROMPT_TEMPLATE.encode("utf-8")).hexdigest()[:12]

# a transport takes the request body and returns the decoded JSON response
Transport = Callable[[dict], dict]


@dataclass(frozen=True)
class JudgeConfig:
    endpoint: str
    model: str
    api_key_env: str = "JUDGE_API_KEY"
    auth_header: str = "Authorization"
    auth_scheme: str = "Bearer"
    timeout: float = 60.0
    max_retries: int = 3
    backoff: float = 1.0
    cache_dir: str | None = None
    max_concurrency: int = 4
    name: str | None = None

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")

    @property
    def label(self) -> str:
        return self.name or self.model

    @classmethod
    def from_dict(cls, data: Mapping) -> "JudgeConfig":
        known = set(cls.__dataclass_fields__)
        return cls(**{k: v for k, v in data.items() if k in known})

    @classmethod
    def load(cls, path: str | Path) -> "JudgeConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class JudgeDecision:
    valid: bool
    explanation: str
    raw: str
    cached: bool = field(default=False, compare=False)


def build_prompt(seq: Sequence[str], phase: str, rs: RuleSet) -> str:
    spec = rs[phase]
    vocab = rs.vocabulary
    ph = spec.phase
    name = f"{ph.code} ({ph.label})" if ph.label else ph.code
    desc = f"Description: {ph.description}\n" if ph.description else ""
    steps = []
    for code in sorted_codes(spec.permitted):
        label = vocab.step_label(code)
        steps.append(f"- {code}: {label}" if label != code else f"- {code}")
    lines = []
    for i, code in enumerate(seq, 1):
        label = vocab.step_label(code)
        lines.append(f"{i}. {code} ({label})" if label != code else f"{i}. {code}")
    return PROMPT_TEMPLATE.format(
        phase_name=name,
        phase_description=desc,
        step_list="\n".join(steps),
        sequence="\n".join(lines) if lines else "(empty sequence)",
    )


def parse_decision(text: str) -> tuple[bool, str]:
    obj = find_json_object(text)
    if obj is None or not isinstance(obj.get("valid"), bool):
        raise ParseFailure("no JSON object with a boolean 'valid' field", raw=text)
    return obj["valid"], str(obj.get("explanation", ""))


def cache_key(model: str, prompt: str) -> str:
    return hashlib.sha256(f"{model}\x00{prompt}".encode("utf-8")).hexdigest()


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".json")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def http_transport(cfg: JudgeConfig) -> Transport:
    import httpx

    def send(body: dict) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(cfg.api_key_env)
        if key:
            headers[cfg.auth_header] = f"{cfg.auth_scheme} {key}".strip()
        resp = httpx.post(cfg.endpoint, json=body, headers=headers, timeout=cfg.timeout)
        resp.raise_for_status()
        return resp.json()

    return send


def response_text(resp: Mapping) -> str:
    """Pull the assistant message out of a chat-completion style response."""
    try:
        return resp["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        pass
    if isinstance(resp.get("content"), str):
        return resp["content"]
    return json.dumps(resp)


class JudgeClient:
    def __init__(
        self,
        cfg: JudgeConfig,
        transport: Transport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.cfg = cfg
        self.transport = transport
        self.sleep = sleep

    @property
    def name(self) -> str:
        return self.cfg.label

    def _cache_path(self, prompt: str) -> Path | None:
        if not self.cfg.cache_dir:
            return None
        return Path(self.cfg.cache_dir) / f"{cache_key(self.cfg.model, prompt)}.json"

    def _call(self, prompt: str) -> str:
        transport = self.transport or http_transport(self.cfg)
        body = {
            "model": self.cfg.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        }
        last: Exception | None = None
        for attempt in range(self.cfg.max_retries + 1):
            try:
                return response_text(transport(body))
            except Exception as exc:  # transport errors of any flavour
                last = exc
                logger.warning("judge %s attempt %d failed: %s", self.name, attempt + 1, exc)
                if attempt < self.cfg.max_retries:
                    self.sleep(self.cfg.backoff * (2**attempt))
        raise JudgeUnavailable(f"{self.name}: {last}") from last

    def judge(self, seq: Sequence[str], phase: str, rs: RuleSet) -> JudgeDecision:
        prompt = build_prompt(seq, phase, rs)
        path = self._cache_path(prompt)
        if path is not None and path.exists():
            raw = json.loads(path.read_text(encoding="utf-8"))["response"]
            valid, expl = parse_decision(raw)
            return JudgeDecision(valid, expl, raw, cached=True)
        raw = self._call(prompt)
        if path is not None:
            record = {
                "model": self.cfg.model,
                "template": TEMPLATE_VERSION,
                "template_hash": TEMPLATE_HASH,
                "prompt": prompt,
                "response": raw,
            }
            _atomic_write(path, json.dumps(record, indent=2, sort_keys=True))
        valid, expl = parse_decision(raw)
        return JudgeDecision(valid, expl, raw)


def judge(seq: Sequence[str], phase: str, rs: RuleSet, cfg: JudgeConfig, transport: Transport | None = None) -> JudgeDecision:
    return JudgeClient(cfg, transport).judge(seq, phase, rs)


class RecordedTransport:
    """Replays responses from a fixture file keyed by prompt hash.

    The fixture is a JSON object ``{"model": ..., "responses": {sha256: text}}``
    where the hash is :func:`cache_key` of (model, prompt). Unknown prompts
    raise, which the client reports as JudgeUnavailable.
    """

    def __init__(self, responses: Mapping[str, str], model: str):
        self.responses = dict(responses)
        self.model = model
        self.calls = 0

    @classmethod
    def load(cls, path: str | Path) -> "RecordedTransport":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(data["responses"], data["model"])

    def __call__(self, body: dict) -> dict:
        self.calls += 1
        prompt = body["messages"][-1]["content"]
        key = cache_key(body["model"], prompt)
        if key not in self.responses:
            raise KeyError(f"no recorded response for prompt {key[:12]}")
        return {"choices": [{"message": {"role": "assistant", "content": self.responses[key]}}]}
