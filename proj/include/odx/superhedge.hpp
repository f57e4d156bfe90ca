#pragma once

#include "odx/deflators.hpp"
#include "odx/optdecomp.hpp"
#include "odx/probtree.hpp"

namespace odx {

enum class ClaimKind { European, American };

struct Claim {
    ClaimKind kind = ClaimKind::European;
    AdaptedProcess payoff; // exercise value per node; European claims read leaves only
};

enum class Vanilla { Put, Call };

// Put or call on the price S_i = E(X_i) with the given strike, as an
// exercise-value process on every node.
Claim vanilla_claim(ClaimKind kind, Vanilla type, double strike, const AdaptedProcess& x, std::size_t asset = 0);

// Smallest process dominating the payoff (every node for American claims,
// leaves for European ones) that is a supermartingale under every
// martingale measure of X.
AdaptedProcess snell_envelope(const Claim& claim, const AdaptedProcess& x);

// Asset prices S_i = E(X_i - X_i(0)) and the numeraire portfolio expressed
// in shares (theta_i = V_hat rho_i / S_i) and currency (eta_i = V_hat rho_i),
// evaluated at the start of each step.
struct PortfolioView {
    AdaptedProcess S;
    PredictableProcess shares;
    PredictableProcess currency;
};

PortfolioView portfolio_view(const PredictableProcess& rho_hat, const AdaptedProcess& v_hat, const AdaptedProcess& x);

struct SuperhedgeResult {
    double price = 0.0;
    AdaptedProcess exercise_value;
    AdaptedProcess envelope;
    Decomposition decomposition;
    PortfolioView view;
};

SuperhedgeResult superhedge(const Claim& claim, const AdaptedProcess& x);

} // namespace odx
