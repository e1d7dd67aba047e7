"""The LLM boundary: a two-variant exchange plus its implementations.

A provider is asked with the full request (system prompt, conversation, tool
schemas, retrieved context) and answers with exactly one of: a tool call or a
final text. ScriptedProvider is the deterministic test double; HttpProvider
speaks a chat-completions-style wire format with function calling.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import httpx


class ProviderError(Exception):
    """Transport failures, timeouts and malformed responses."""


class ScriptExhaustedError(ProviderError):
    pass


class ProviderConfigError(Exception):
    """Startup misconfiguration, e.g. a missing credential. Never retried."""


@dataclass
class ProviderRequest:
    system_prompt: str
    conversation: list[dict]
    tool_schemas: list[dict]
    retrieved_context: list[dict]


@dataclass
class ProviderResponse:
    """Exactly one of tool_call or final."""

    tool_name: str | None = None
    tool_args: dict | None = None
    final: str | None = None

    def __post_init__(self):
        is_tool = self.tool_name is not None
        is_final = self.final is not None
        if is_tool == is_final:
            raise ValueError("response must be exactly one of tool_call or final")
        if is_tool and self.tool_args is None:
            self.tool_args = {}

    @classmethod
    def tool(cls, name: str, args: dict | None = None) -> "ProviderResponse":
        return cls(tool_name=name, tool_args=dict(args or {}))

    @classmethod
    def text(cls, final: str) -> "ProviderResponse":
        return cls(final=final)


def parse_script(entries: list[dict]) -> list[ProviderResponse]:
    """Script entries as written in scenario/service files:
    {"tool": name, "args": {...}} or {"final": text}."""
    script = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise ValueError(f"script entry {i} must be a mapping, got {entry!r}")
        if "final" in entry:
            script.append(ProviderResponse.text(str(entry["final"])))
        elif "tool" in entry:
            script.append(ProviderResponse.tool(entry["tool"], entry.get("args") or {}))
        else:
            raise ValueError(f"script entry {i} needs a 'tool' or 'final' key")
    return script


class ScriptedProvider:
    """Plays back a fixed response sequence and records every request shown."""

    def __init__(self, script: list[ProviderResponse]):
        if not script:
            raise ValueError("script must be non-empty")
        self._script = list(script)
        self._pos = 0
        self.requests: list[ProviderRequest] = []

    def ask(self, request: ProviderRequest) -> ProviderResponse:
        self.requests.append(request)
        if self._pos >= len(self._script):
            raise ScriptExhaustedError(f"script exhausted after {len(self._script)} responses")
        resp = self._script[self._pos]
        self._pos += 1
        return resp


class HttpProvider:
    """Live LLM over a chat-completions endpoint with function calling.

    The credential is read from the environment at construction and never
    appears in config files or logs; a missing credential fails fast before
    any turn runs.
    """

    def __init__(
        self,
        endpoint_url: str,
        model_name: str,
        api_key_env: str = "CELLOPS_API_KEY",
        timeout_s: float = 60.0,
    ):
        if not endpoint_url:
            raise ProviderConfigError("provider endpoint_url is required")
        credential = os.environ.get(api_key_env or "")
        if not credential:
            raise ProviderConfigError(
                f"credential environment variable {api_key_env!r} is not set"
            )
        self.endpoint_url = endpoint_url
        self.model_name = model_name
        self._headers = {"Authorization": f"Bearer {credential}"}
        self._client = httpx.Client(timeout=timeout_s)

    def _wire_messages(self, request: ProviderRequest) -> list[dict]:
        system = request.system_prompt
        if request.retrieved_context:
            excerpts = "\n\n".join(
                f"[{c['chunk_id']}] {c['text']}" for c in request.retrieved_context
            )
            system = f"{system}\n\nRetrieved context:\n{excerpts}"
        messages = [{"role": "system", "content": system}]
        call_no = 0
        for msg in request.conversation:
            if msg["role"] == "assistant" and "tool_call" in msg:
                call_no += 1
                messages.append(
                    {
                        "role": "assistant",
                        "content": None,
                        "tool_calls": [
                            {
                                "id": f"call_{call_no}",
                                "type": "function",
                                "function": {
                                    "name": msg["tool_call"]["name"],
                                    "arguments": json.dumps(msg["tool_call"]["args"]),
                                },
                            }
                        ],
                    }
                )
            elif msg["role"] == "tool":
                messages.append(
                    {
                        "role": "tool",
                        "tool_call_id": f"call_{call_no}",
                        "content": json.dumps(msg["content"]),
                    }
                )
            else:
                messages.append({"role": msg["role"], "content": msg["content"]})
        return messages

    def ask(self, request: ProviderRequest) -> ProviderResponse:
        body = {
            "model": self.model_name,
            "messages": self._wire_messages(request),
            "tools": [
                {"type": "function", "function": schema} for schema in request.tool_schemas
            ],
        }
        try:
            resp = self._client.post(self.endpoint_url, json=body, headers=self._headers)
            resp.raise_for_status()
            message = resp.json()["choices"][0]["message"]
        except httpx.HTTPError as exc:
            raise ProviderError(f"provider transport failure: {exc}") from exc
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise ProviderError(f"malformed provider response: {exc}") from exc

        tool_calls = message.get("tool_calls") or []
        if tool_calls:
            fn = tool_calls[0].get("function") or {}
            name = fn.get("name")
            raw_args = fn.get("arguments", "{}")
            try:
                args = json.loads(raw_args) if isinstance(raw_args, str) else dict(raw_args)
            except (ValueError, TypeError) as exc:
                raise ProviderError(f"malformed tool arguments: {exc}") from exc
            if not name or not isinstance(args, dict):
                raise ProviderError("malformed tool call in provider response")
            return ProviderResponse.tool(name, args)
        content = message.get("content")
        if isinstance(content, str):
            return ProviderResponse.text(content)
        raise ProviderError("provider response is neither a tool call nor final text")


@lru_cache(maxsize=1)
def system_prompt() -> str:
    """The versioned system prompt asset shipped with the package."""
    return (resources.files("cellops.data") / "system_prompt.md").read_text()
