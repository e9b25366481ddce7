# Lumen — Deterministic synthetic corpora
