"""Next-item prediction and the recommendation endpoint."""

from txtrec.serve.client import RecommendClient, parse_endpoint
from txtrec.serve.predict import (
    LoadedModel,
    Recommendation,
    RecommendRequest,
    RecommendResponse,
    predict_top_k,
    request_from_cli,
)
from txtrec.serve.protocol import MAX_FRAME, encode_frame, read_frame, write_frame
from txtrec.serve.server import EndpointConfig, RecommendationServer, serve

__all__ = [
    "MAX_FRAME",
    "EndpointConfig",
    "LoadedModel",
    "RecommendClient",
    "Recommendation",
    "RecommendRequest",
    "RecommendResponse",
    "RecommendationServer",
    "encode_frame",
    "parse_endpoint",
    "predict_top_k",
    "read_frame",
    "request_from_cli",
    "serve",
    "write_frame",
]
