# Generates crates/core/tests/fixtures/closed_form.csv with 50-digit mpmath oracles.
import os, random, csv
from mpmath import mp, mpf, atan, pi, exp, log10, log, sqrt
mp.dps = 50
rnd = random.Random(7)
FC, C, R1, R2, ELOS, ENLOS, PTX, NOISE = 2.4e9, 3e8, 5.0188, 0.3511, 0.1, 21.0, 40.0, -110.0
M = lambda x: mpf(repr(x))
def los(dh, hz):
    th = mpf(90) if hz == 0 else atan(M(dh)/M(hz))*180/pi
    return 1/(1+M(R1)*exp(-M(R2)*(th-M(R1))))
def pl(d, om, dh, hz):
    f = 20*log10(4*pi*M(FC)*M(d)/M(C))
    if om == 0: return f
    return f + M(om)*(los(dh,hz)*(M(ELOS)-M(ENLOS))+M(ENLOS))
def rate(bw, pldb):
    snr = mpf(10)**(M(PTX)/10) * mpf(10)**(-M(pldb)/10) / mpf(10)**(M(NOISE)/10)
    return M(bw)*log(1+snr)/log(2)
rows = []
def add(name, ins, outs):
    rows.append([name, ";".join(repr(x) for x in ins), ";".join(mp.nstr(o, 20, strip_zeros=False) for o in outs)])
N = 100
for _ in range(N):
    dh, hz = rnd.uniform(0, 400), rnd.uniform(1, 6000)
    add("los", [dh, hz], [los(dh, hz)])
for _ in range(N):
    dh, hz = rnd.uniform(0, 400), rnd.uniform(1, 6000)
    d = (dh*dh+hz*hz)**0.5
    om = rnd.choice([0.0, 1.0])
    add("path_loss", [d, om, dh, hz], [pl(d, om, dh, hz)])
for _ in range(N):
    n = rnd.randint(1, 6)
    sizes = [rnd.uniform(4e5, 6e5) for _ in range(n)]
    tot = rnd.uniform(1e6, 5e6)
    s = sum(M(x) for x in sizes)
    add("bandwidth", [tot] + sizes, [M(x)*M(tot)/s for x in sizes])
for _ in range(N):
    bw, pldb = rnd.uniform(1e5, 2.4e6), rnd.uniform(60, 140)
    add("rate", [bw, pldb], [rate(bw, pldb)])
for _ in range(N):
    k = rnd.randint(2, 20)
    ev, em, es = rnd.uniform(5e5, 2e6), rnd.uniform(5e5, 2e6), rnd.uniform(5e5, 2e6)
    p = rnd.uniform(2e9, 4e9)
    reps = [rnd.uniform(2e9, 4e9) for _ in range(k-1)]
    K = mpf(k); EV, EM, ES, P = M(ev), M(em), M(es), M(p)
    q = 2*((k-1+2)//3)+1
    t1 = K*(EV+EM)/P
    t2 = (ES+(K-1)*EM)/P + max((K+1)*(EV+EM)/M(c) for c in reps)
    t3p = q*(EV+EM)/P
    t3n = max((q*(EV+EM)+ES+(K-1)*EM)/M(c) for c in reps)
    t3 = max(t3p, t3n)
    t4 = (ES+(K-1)*EM+q*(EV+EM))/min([P]+[M(c) for c in reps])
    add("consensus", [float(k), ev, em, es, p] + reps, [t1, t2, t3, t4, t1+t2+t3+t4])
for _ in range(N):
    cr, cp, st = rnd.uniform(0, 1), rnd.uniform(2e9, 4e9), rnd.uniform(1e9, 4e9)
    mc, ms = cp + rnd.uniform(0, 1e9), st + rnd.uniform(0, 1e9)
    w1 = rnd.uniform(0, 1)
    add("score", [cr, cp, st, mc, ms, w1, 1-w1], [M(cr)*(M(w1)*M(cp)/M(mc)+M(1-w1)*M(st)/M(ms))])
for scheme in ["adaptive", "average"]:
    for _ in range(N):
        beta, thr = rnd.uniform(0.1, 1), rnd.uniform(0.5, 0.95)
        cr, td, ti = rnd.uniform(0.05, 1), rnd.uniform(0, 0.999), rnd.uniform(0, 0.999)
        b = mpf("0.5") if scheme == "average" else M(beta)
        p0 = min(b*M(thr)/M(cr), mpf("0.9"))
        if scheme == "adaptive":
            u1, u2 = 1-M(td), 1-M(ti)
            p1 = (1-p0)*u1/(u1+u2); p2 = (1-p0)*u2/(u1+u2)
        else:
            p1 = p2 = (1-p0)/2
        add("weights_" + scheme, [beta, thr, cr, td, ti], [p0, p1, p2])
for _ in range(N):
    cr, td, ti = rnd.uniform(0, 1), rnd.uniform(0, 1), rnd.uniform(0, 1)
    a, b = rnd.uniform(0, 1), rnd.uniform(0, 1)
    w = sorted([a, b]); w0, w1, w2 = w[0], w[1]-w[0], 1-w[1]
    v = M(w0)*M(cr)+M(w1)*M(td)+M(w2)*M(ti)
    add("update_credit", [cr, w0, w1, w2, td, ti], [min(max(v, mpf("0.01")), 1)])
for _ in range(N):
    tu, tk, d, io, vs = rnd.uniform(0, 1), rnd.uniform(0, 1), rnd.uniform(1e-3, 0.5), rnd.uniform(1, 20), rnd.uniform(0.05, 1)
    add("reward", [tu, tk, d, io, vs], [M(tu)*M(tk)/(M(d)*M(io)+M(vs))])
for _ in range(N):
    base, duk, dkb = rnd.uniform(0, 3), rnd.uniform(1, 6000), rnd.uniform(0, 15000)
    add("shaped_reward", [base, duk, dkb], [M(base)*M(duk)/(M(duk)+M(dkb))])
with open(os.path.join(os.path.dirname(os.path.abspath(__file__)), "closed_form.csv"), "w", newline="") as f:
    w = csv.writer(f, lineterminator="\n")
    w.writerow(["function", "inputs", "expected"])
    w.writerows(rows)

