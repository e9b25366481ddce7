# Lumen — Re-ranking, retrieval strategies and retrieval evaluation
