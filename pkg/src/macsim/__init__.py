"""One-shot MAC channel simulation: rate bounds, protocols and verification."""
__version__ = "0.1.0"

from .probability import (  # noqa: F401
    Channel,
    Decomposition,
    Joint,
    MacChannel,
    Pmf,
    channel_tv,
    induced_joint,
    mac_joint,
    tv_distance,
)
from .entropic import (  # noqa: F401
    SmoothingSpec,
    dmax,
    imax_channel,
    imax_state,
    max_mutual_information,
    mutual_information,
    smooth_imax,
)
