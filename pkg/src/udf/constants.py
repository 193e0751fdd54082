"""Default numerical tolerances. Every emitted report embeds the values used."""

EPS_BND = 1e-11       # boundary residual |gauge - 1|
TAU_TAN = 1e-7        # chords shorter than this count as tangency
TAU = 1e-9            # dedup radius for point sets
EPS_UNIT = 1e-9       # pairwise unit-distance tolerance
GAUGE_ATOL = 1e-13    # radial bisection tolerance

DEFAULT_TOLERANCES = {
    "tau": TAU,
    "eps_bnd": EPS_BND,
    "eps_unit": EPS_UNIT,
    "tau_tan": TAU_TAN,
}
