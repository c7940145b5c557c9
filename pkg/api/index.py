# api/index.py (entry point for uvicorn and serverless hosts)

from .server import app

# The FastAPI app itself is defined in server.py
__all__ = ["app"]
