# Lumen — Embedding storage and vector primitives
