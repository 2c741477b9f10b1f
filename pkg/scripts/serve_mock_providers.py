#!/usr/bin/env python3
"""Stdlib HTTP server implementing the two provider endpoints with cheap
deterministic stand-ins, for exercising the live-scoring path without any
neural dependencies.

POST /cosine  {"a": str, "b": str}              -> {"cosine": float}
POST /logprob {"pre": str, "gt": str, "post": str} -> {"logp_conditional": float}

Cosine is a character-bigram bag cosine (so paraphrases score mid-range,
copies score 1). Log-probability is a context-overlap heuristic mapped
into [-10, 2]: ground truths sharing words with their context count as
predictable. Point UCSM_EMBED_URL and UCSM_LM_URL at this server.
"""
import argparse
import json
import math
from collections import Counter
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer


def bigrams(text: str) -> Counter:
    padded = f" {text.lower()} "
    return Counter(padded[i:i + 2] for i in range(len(padded) - 1))


def toy_cosine(a: str, b: str) -> float:
    ca, cb = bigrams(a), bigrams(b)
    dot = sum(ca[k] * cb[k] for k in ca)
    na = math.sqrt(sum(v * v for v in ca.values()))
    nb = math.sqrt(sum(v * v for v in cb.values()))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return dot / (na * nb)


def toy_logprob(pre: str, gt: str, post: str) -> float:
    context = set(f"{pre} {post}".lower().split())
    target = gt.lower().split()
    if not target:
        return -10.0
    overlap = sum(1 for w in target if w in context) / len(target)
    # Blend with a length prior so zero-overlap targets still spread out
    # instead of all pinning context error at its ceiling.
    predictability = 0.6 * overlap + 0.4 * math.exp(-len(gt) / 24.0)
    return 2.0 - 12.0 * (1.0 - predictability)


class Handler(BaseHTTPRequestHandler):
    def do_POST(self) -> None:  # noqa: N802 (stdlib naming)
        length = int(self.headers.get("Content-Length", 0))
        try:
            payload = json.loads(self.rfile.read(length))
        except json.JSONDecodeError:
            self.reply(400, {"error": "invalid JSON"})
            return
        try:
            if self.path == "/cosine":
                doc = {"cosine": toy_cosine(payload["a"], payload["b"])}
            elif self.path == "/logprob":
                doc = {"logp_conditional": toy_logprob(
                    payload["pre"], payload["gt"], payload["post"])}
            else:
                self.reply(404, {"error": f"unknown path {self.path}"})
                return
        except (KeyError, TypeError) as exc:
            self.reply(400, {"error": f"bad payload: {exc}"})
            return
        self.reply(200, doc)

    def reply(self, status: int, doc: dict) -> None:
        body = json.dumps(doc).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, fmt: str, *args) -> None:
        print(f"{self.address_string()} {fmt % args}")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8377)
    args = parser.parse_args()
    server = ThreadingHTTPServer((args.host, args.port), Handler)
    url = f"http://{args.host}:{server.server_address[1]}"
    print(f"serving mock providers on {url}")
    print(f"  export UCSM_EMBED_URL={url}")
    print(f"  export UCSM_LM_URL={url}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
