from vssprofile.report._io import (
    PROFILE_COLUMNS,
    SCHEMA_VERSION,
    SWEEP_COLUMNS,
    VARIATIONAL_COLUMNS,
    OutputRecord,
    RunManifest,
    dumps,
    plot_profile,
    read_profile,
    sha256_file,
    tails_document,
    verify_manifest,
    write_json,
    write_manifest,
    write_profile,
    write_sweep,
    write_variational,
)
from vssprofile.report._verify import (
    CHECKS,
    CheckRecord,
    CheckStatus,
    VerificationReport,
    run_verification,
)

__all__ = [
    "CHECKS",
    "PROFILE_COLUMNS",
    "SCHEMA_VERSION",
    "SWEEP_COLUMNS",
    "VARIATIONAL_COLUMNS",
    "CheckRecord",
    "CheckStatus",
    "OutputRecord",
    "RunManifest",
    "VerificationReport",
    "dumps",
    "plot_profile",
    "read_profile",
    "run_verification",
    "sha256_file",
    "tails_document",
    "verify_manifest",
    "write_json",
    "write_manifest",
    "write_profile",
    "write_sweep",
    "write_variational",
]
