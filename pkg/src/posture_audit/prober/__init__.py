"""TLS handshake probing: ClientHello construction, response parsing, enumeration."""
from .net import Endpoint, Pacer, ProbePolicy
from .probe import (ProtocolSupportMatrix, RawChain, RetrievalPath, VersionSupport,
                    enumerate_ciphers, enumerate_protocols, fetch_certificate_chain, probe)
from .wire import Outcome, ProbeResult, build_client_hello, parse_server_response

__all__ = [
    "Endpoint", "Outcome", "Pacer", "ProbePolicy", "ProbeResult", "ProtocolSupportMatrix",
    "RawChain", "RetrievalPath", "VersionSupport", "build_client_hello", "enumerate_ciphers",
    "enumerate_protocols", "fetch_certificate_chain", "parse_server_response", "probe",
]
