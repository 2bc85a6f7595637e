"""External-data clients: recorded HTTP, THPA, PubMed and the LLM provider registry."""
