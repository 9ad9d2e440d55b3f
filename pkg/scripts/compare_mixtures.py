"""Win rates of Camel-Log against the exponential and Pareto mixtures on
synthetic users, by held-out log-likelihood and by BIC."""
import argparse

from iatanomaly.anomaly import user_seed
from iatanomaly.gof import evaluate_models
from iatanomaly.simulate import DEFAULT_POPULATION, simulate_users


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--users", type=int, default=100)
    ap.add_argument("--iats", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    users = simulate_users(DEFAULT_POPULATION, args.users, args.iats, args.seed)
    wins = {("test_loglik", m): 0 for m in ("expmix", "paretomix")}
    wins.update({("bic", m): 0 for m in ("expmix", "paretomix")})
    for u in users:
        s = {g.model_name: g for g in evaluate_models(u.iats, user_seed(args.seed, u.user_id))}
        for m in ("expmix", "paretomix"):
            wins["test_loglik", m] += s["camellog"].test_loglik > s[m].test_loglik
            wins["bic", m] += s["camellog"].bic < s[m].bic

    print(f"{'criterion':<12} {'vs expmix':>10} {'vs paretomix':>13}")
    for crit in ("test_loglik", "bic"):
        e = wins[crit, "expmix"] / len(users)
        p = wins[crit, "paretomix"] / len(users)
        print(f"{crit:<12} {e:>10.1%} {p:>13.1%}")


if __name__ == "__main__":
    main()
