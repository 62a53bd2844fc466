"""Exception types shared across the package."""


class ContractError(RuntimeError):
    """A usage-contract violation (e.g. predicting from a fit whose trees
    were not cached, or loading an archive with an unknown format version).

    Distinct from input errors so the CLI can map the two to different
    exit codes.
    """
