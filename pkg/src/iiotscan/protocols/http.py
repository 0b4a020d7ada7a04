"""HTTP/1.1 GET, used for the Fox platform daemon."""
from __future__ import annotations

import re

from ..catalog import Protocol
from .base import Codec, Malformed, ProbeMessage, Reason, bad, ok

STATUS_LINE = re.compile(rb"^HTTP/1\.[01] (\d{3})(?: ([^\r\n]*))?$")
HEADER_LINE = re.compile(rb"^([!#$%&'*+.^_`|~0-9A-Za-z-]+):[ \t]*(.*?)[ \t]*$")
METHODS = ("GET", "HEAD", "POST", "PUT", "DELETE", "PATCH", "OPTIONS", "CONNECT", "TRACE")


def parse_head(raw: bytes) -> tuple[int, str, dict[str, str], int]:
    """(status, reason, headers, body offset).  ValueError if not HTTP at all."""
    if not raw.startswith(b"HTTP/"):
        raise ValueError("no HTTP status line")
    end = raw.find(b"\r\n\r\n")
    if end < 0:
        raise Malformed("header block not terminated")
    lines = raw[:end].split(b"\r\n")
    m = STATUS_LINE.match(lines[0])
    if not m:
        raise Malformed("bad status line")
    status = int(m.group(1))
    if not 100 <= status <= 599:
        raise Malformed(f"status {status}")
    headers = {}
    for line in lines[1:]:
        h = HEADER_LINE.match(line)
        if not h:
            raise Malformed("bad header line")
        headers[h.group(1).decode().lower()] = h.group(2).decode("latin-1")
    return status, (m.group(2) or b"").decode("latin-1"), headers, end + 4


class HttpCodec(Codec):
    protocol = Protocol.FOX_PLATFORM
    read_only_kinds = frozenset({"GET", "HEAD"})

    def encode_request(self, host: str = "localhost", path: str = "/", method: str = "GET") -> bytes:
        return (f"{method} {path} HTTP/1.1\r\nHost: {host}\r\nUser-Agent: iiotscan\r\n"
                "Accept: */*\r\nConnection: close\r\n\r\n").encode()

    def decode_request(self, payload: bytes) -> dict:
        text = payload.decode("latin-1")
        if not text.endswith("\r\n\r\n"):
            raise Malformed("request not terminated")
        lines = text[:-4].split("\r\n")
        method, path, version = lines[0].split(" ")
        headers = dict(line.split(": ", 1) for line in lines[1:])
        if version != "HTTP/1.1" or headers.get("User-Agent") != "iiotscan":
            raise Malformed("not a probe request")
        return {"host": headers["Host"], "path": path, "method": method}

    def build_probe(self, host: str = "localhost", **_) -> ProbeMessage:
        return ProbeMessage(self.protocol, self.encode_request(host))

    def request_kind(self, payload: bytes) -> str:
        word = bytes(payload[:8]).split(b" ", 1)[0].decode("latin-1", "replace")
        return word if word in METHODS else "UNPARSABLE"

    def frame_length(self, buf) -> int | None:
        raw = bytes(buf)
        end = raw.find(b"\r\n\r\n")
        if end < 0:
            return None
        m = re.search(rb"\r\ncontent-length:[ \t]*(\d+)", raw[:end], re.IGNORECASE)
        # without a length the reply runs until the server closes
        return end + 4 + int(m.group(1)) if m else None

    def _validate(self, data, probe):
        raw = bytes(data)
        try:
            status, reason, headers, offset = parse_head(raw)
        except ValueError as exc:
            return bad(Reason.BAD_MAGIC, str(exc))
        if "content-length" in headers:
            if not headers["content-length"].isdigit():
                raise Malformed("non-numeric Content-Length")
            if int(headers["content-length"]) > len(raw) - offset:
                return bad(Reason.BAD_LENGTH_FIELD, "body shorter than Content-Length")
        return ok(code=str(status), detail=headers.get("server"))

    def respond(self, request: bytes, behavior: str = "compliant") -> bytes | None:
        if behavior == "silent":
            return None
        if behavior == "error_response":
            body, head = b"", "HTTP/1.1 401 Unauthorized\r\nWWW-Authenticate: Basic realm=\"station\"\r\n"
        else:
            body = b"<html><title>Station Login</title></html>"
            head = "HTTP/1.1 200 OK\r\nServer: Niagara Web Server/4.10\r\nContent-Type: text/html\r\n"
        length = len(body) + (4096 if behavior == "malformed_length" else 0)
        return (head + f"Content-Length: {length}\r\nConnection: close\r\n\r\n").encode() + body
