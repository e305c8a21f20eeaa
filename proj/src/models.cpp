#include "cmodes/models.hpp"

#include <Eigen/Dense>
#include <string>

namespace cmodes {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw ValidationError(what);
}

}  // namespace

void PerUnitBase::validate() const {
    require(s_base > 0.0, "base.s_base must be positive");
    require(v_base > 0.0, "base.v_base must be positive");
    require(f_base > 0.0, "base.f_base must be positive");
}

void SmParams::validate() const {
    require(H > 0.0, "sm.H must be positive");
    require(Kd >= 0.0, "sm.Kd must be non-negative");
    require(Ra >= 0.0, "sm.Ra must be non-negative");
    require(Xd >= Xd_p && Xd_p >= Xd_pp && Xd_pp > Xl && Xl >= 0.0,
            "sm reactances must satisfy Xd >= Xd_p >= Xd_pp > Xl >= 0");
    require(Xq > Xq_pp && Xq_pp > Xl, "sm reactances must satisfy Xq > Xq_pp > Xl");
    require(Td0_p > 0.0 && Td0_pp > 0.0 && Tq0_pp > 0.0, "sm time constants must be positive");
}

void AvrParams::validate() const {
    require(Te > 0.0, "avr.Te must be positive");
    require(Ke > 0.0, "avr.Ke must be positive");
}

void GovTurbineParams::validate() const {
    require(Rg > 0.0 && Rg < 1.0, "gov.Rg must lie in (0, 1)");
    require(Tg > 0.0 && Tr > 0.0, "gov.Tg and gov.Tr must be positive");
    require(Fh >= 0.0 && Fh <= 1.0, "gov.Fh must lie in [0, 1]");
}

void GflParams::validate() const {
    require(Lf > 0.0, "gfl.Lf must be positive");
    require(Cf > 0.0, "gfl.Cf must be positive");
    require(Rf >= 0.0, "gfl.Rf must be non-negative");
    require(Ki > 0.0, "gfl.Ki must be positive");
    require(Kp >= 0.0, "gfl.Kp must be non-negative");
    require(tau_f > 0.0, "gfl.tau_f must be positive");
    require(tau_w > 0.0, "gfl.tau_w must be positive");
    require(tau_p >= 0.0, "gfl.tau_p must be non-negative");
    require(Rp > 0.0, "gfl.Rp must be positive");
    require(v_min > 0.0, "gfl.v_min must be positive");
}

void EquGridParams::validate() const {
    require(He > 0.0, "grid.He must be positive");
    require(Du >= 0.0, "grid.Du must be non-negative");
    require(V > 0.0, "grid.V must be positive");
}

SmCircuit SmCircuit::from_params(const SmParams& p, double omega_b) {
    p.validate();
    SmCircuit c;
    c.Ra = p.Ra;
    c.H = p.H;
    c.Kd = p.Kd;
    c.Ll = p.Xl;
    c.Lad = p.Xd - p.Xl;
    c.Laq = p.Xq - p.Xl;

    // Classical conversion from operational reactances / open-circuit time
    // constants to the equivalent-circuit constants (equal mutual inductances).
    const double xdp = p.Xd_p - p.Xl;
    require(c.Lad > xdp, "sm.Xd_p must be smaller than sm.Xd");
    c.Lfd = c.Lad * xdp / (c.Lad - xdp);
    const double inv_l1d = 1.0 / (p.Xd_pp - p.Xl) - 1.0 / c.Lad - 1.0 / c.Lfd;
    require(inv_l1d > 0.0, "sm.Xd_pp must be strictly smaller than sm.Xd_p");
    c.L1d = 1.0 / inv_l1d;
    const double xqpp = p.Xq_pp - p.Xl;
    c.L1q = c.Laq * xqpp / (c.Laq - xqpp);

    c.Rfd = (c.Lad + c.Lfd) / (omega_b * p.Td0_p);
    c.R1d = (c.L1d + c.Lad * c.Lfd / (c.Lad + c.Lfd)) / (omega_b * p.Td0_pp);
    c.R1q = (c.Laq + c.L1q) / (omega_b * p.Tq0_pp);

    Eigen::Matrix3d md;
    md << -(c.Lad + c.Ll), c.Lad, c.Lad,
          -c.Lad, c.Lad + c.Lfd, c.Lad,
          -c.Lad, c.Lad, c.Lad + c.L1d;
    const Eigen::Matrix3d id = md.inverse();
    Eigen::Matrix2d mq;
    mq << -(c.Laq + c.Ll), c.Laq,
          -c.Laq, c.Laq + c.L1q;
    const Eigen::Matrix2d iq = mq.inverse();
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) c.inv_d[i][j] = id(i, j);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) c.inv_q[i][j] = iq(i, j);
    return c;
}

}  // namespace cmodes
