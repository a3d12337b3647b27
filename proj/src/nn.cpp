#include "phonos/nn.hpp"

#include "phonos/error.hpp"
#include "phonos/kernels.hpp"
#include "phonos/rng.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace phonos::nn {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

size_t shape_count(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) {
        if (d <= 0)
            raise(Errc::config, "tensor shape must be positive");
        n *= static_cast<size_t>(d);
    }
    return n;
}

void check_finite(const Tensor& t, const char* op) {
    for (double v : t.values) {
        if (!std::isfinite(v))
            raise(Errc::numeric, std::string(op) + " produced a non-finite value");
    }
}

TensorPtr finish(TensorPtr out, std::vector<TensorPtr> parents,
                 std::function<void(Tensor&)> bwd, const char* op) {
    check_finite(*out, op);
    bool needs = false;
    for (const auto& p : parents)
        needs = needs || p->requires_grad;
    out->requires_grad = needs;
    if (needs) {
        out->parents = std::move(parents);
        out->backward_fn = std::move(bwd);
    }
    return out;
}

double logsumexp2(double a, double b) {
    if (a == kNegInf)
        return b;
    if (b == kNegInf)
        return a;
    double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

double logsumexp3(double a, double b, double c) {
    return logsumexp2(logsumexp2(a, b), c);
}

} // namespace

TensorPtr make_tensor(std::vector<int> shape, bool requires_grad) {
    auto t = std::make_shared<Tensor>();
    t->values.assign(shape_count(shape), 0.0);
    t->shape = std::move(shape);
    t->requires_grad = requires_grad;
    return t;
}

TensorPtr make_scalar(double v) {
    auto t = make_tensor({1});
    t->values[0] = v;
    return t;
}

void backward(const TensorPtr& loss) {
    if (!loss || loss->count() != 1)
        raise(Errc::config, "backward requires a scalar loss");
    if (loss->backward_done)
        raise(Errc::config, "second backward on the same graph without reset");
    loss->backward_done = true;

    // Iterative post-order DFS, then replay in reverse.
    std::vector<Tensor*> order;
    std::unordered_set<Tensor*> seen;
    std::vector<std::pair<Tensor*, size_t>> stack;
    stack.emplace_back(loss.get(), 0);
    seen.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Tensor* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second)
                stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    for (Tensor* t : order)
        t->ensure_grad();
    loss->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward_fn)
            (*it)->backward_fn(**it);
    }
}

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape != b->shape)
        raise(Errc::config, "add shape mismatch");
    auto out = make_tensor(a->shape);
    for (size_t i = 0; i < out->count(); ++i)
        out->values[i] = a->values[i] + b->values[i];
    return finish(out, {a, b}, [a, b](Tensor& self) {
        if (a->requires_grad) {
            a->ensure_grad();
            for (size_t i = 0; i < self.count(); ++i)
                a->grad[i] += self.grad[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (size_t i = 0; i < self.count(); ++i)
                b->grad[i] += self.grad[i];
        }
    }, "add");
}

TensorPtr add_rowvec(const TensorPtr& x, const TensorPtr& bias) {
    int t = x->rows(), d = x->cols();
    if (static_cast<int>(bias->count()) != d)
        raise(Errc::config, "bias length does not match columns");
    auto out = make_tensor(x->shape);
    for (int r = 0; r < t; ++r)
        for (int c = 0; c < d; ++c)
            out->at(r, c) = x->at(r, c) + bias->values[c];
    return finish(out, {x, bias}, [x, bias, t, d](Tensor& self) {
        if (x->requires_grad) {
            x->ensure_grad();
            for (size_t i = 0; i < self.count(); ++i)
                x->grad[i] += self.grad[i];
        }
        if (bias->requires_grad) {
            bias->ensure_grad();
            for (int r = 0; r < t; ++r)
                for (int c = 0; c < d; ++c)
                    bias->grad[c] += self.grad[static_cast<size_t>(r) * d + c];
        }
    }, "add_rowvec");
}

TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
    if (a->shape != b->shape)
        raise(Errc::config, "mul shape mismatch");
    auto out = make_tensor(a->shape);
    for (size_t i = 0; i < out->count(); ++i)
        out->values[i] = a->values[i] * b->values[i];
    return finish(out, {a, b}, [a, b](Tensor& self) {
        if (a->requires_grad) {
            a->ensure_grad();
            for (size_t i = 0; i < self.count(); ++i)
                a->grad[i] += self.grad[i] * b->values[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (size_t i = 0; i < self.count(); ++i)
                b->grad[i] += self.grad[i] * a->values[i];
        }
    }, "mul");
}

TensorPtr scale(const TensorPtr& a, double c) {
    auto out = make_tensor(a->shape);
    for (size_t i = 0; i < out->count(); ++i)
        out->values[i] = a->values[i] * c;
    return finish(out, {a}, [a, c](Tensor& self) {
        if (!a->requires_grad)
            return;
        a->ensure_grad();
        for (size_t i = 0; i < self.count(); ++i)
            a->grad[i] += self.grad[i] * c;
    }, "scale");
}

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
    int m = a->rows(), k = a->cols(), k2 = b->rows(), n = b->cols();
    if (k != k2)
        raise(Errc::config, "matmul inner dimensions differ");
    auto out = make_tensor({m, n});
    kernels::matmul(a->values.data(), b->values.data(), out->values.data(), m, k, n);
    return finish(out, {a, b}, [a, b, m, k, n](Tensor& self) {
        if (a->requires_grad) {
            a->ensure_grad();
            std::vector<double> tmp(static_cast<size_t>(m) * k);
            kernels::matmul_a_bt(self.grad.data(), b->values.data(), tmp.data(), m, n, k);
            for (size_t i = 0; i < tmp.size(); ++i)
                a->grad[i] += tmp[i];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            std::vector<double> tmp(static_cast<size_t>(k) * n);
            kernels::matmul_at_b(a->values.data(), self.grad.data(), tmp.data(), m, k, n);
            for (size_t i = 0; i < tmp.size(); ++i)
                b->grad[i] += tmp[i];
        }
    }, "matmul");
}

TensorPtr sum(const TensorPtr& a) {
    auto out = make_tensor({1});
    out->values[0] = std::accumulate(a->values.begin(), a->values.end(), 0.0);
    return finish(out, {a}, [a](Tensor& self) {
        if (!a->requires_grad)
            return;
        a->ensure_grad();
        for (size_t i = 0; i < a->count(); ++i)
            a->grad[i] += self.grad[0];
    }, "sum");
}

TensorPtr gelu(const TensorPtr& x) {
    auto out = make_tensor(x->shape);
    for (size_t i = 0; i < x->count(); ++i) {
        double v = x->values[i];
        out->values[i] = 0.5 * v * (1.0 + std::erf(v * M_SQRT1_2));
    }
    return finish(out, {x}, [x](Tensor& self) {
        if (!x->requires_grad)
            return;
        x->ensure_grad();
        constexpr double inv_sqrt_2pi = 0.3989422804014327;
        for (size_t i = 0; i < x->count(); ++i) {
            double v = x->values[i];
            double phi_cdf = 0.5 * (1.0 + std::erf(v * M_SQRT1_2));
            double phi_pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
            x->grad[i] += self.grad[i] * (phi_cdf + v * phi_pdf);
        }
    }, "gelu");
}

TensorPtr sigmoid(const TensorPtr& x) {
    auto out = make_tensor(x->shape);
    for (size_t i = 0; i < x->count(); ++i) {
        double v = x->values[i];
        out->values[i] = v >= 0 ? 1.0 / (1.0 + std::exp(-v))
                                : std::exp(v) / (1.0 + std::exp(v));
    }
    auto saved = out->values;
    return finish(out, {x}, [x, saved](Tensor& self) {
        if (!x->requires_grad)
            return;
        x->ensure_grad();
        for (size_t i = 0; i < x->count(); ++i) {
            double s = saved[i];
            x->grad[i] += self.grad[i] * s * (1.0 - s);
        }
    }, "sigmoid");
}

TensorPtr layernorm(const TensorPtr& x, const TensorPtr& gamma, const TensorPtr& beta,
                    double eps) {
    int t = x->rows(), d = x->cols();
    if (static_cast<int>(gamma->count()) != d || static_cast<int>(beta->count()) != d)
        raise(Errc::config, "layernorm affine params do not match columns");
    auto out = make_tensor(x->shape);
    std::vector<double> xhat(static_cast<size_t>(t) * d);
    std::vector<double> inv_std(t);
    for (int r = 0; r < t; ++r) {
        double mean = 0.0;
        for (int c = 0; c < d; ++c)
            mean += x->at(r, c);
        mean /= d;
        double var = 0.0;
        for (int c = 0; c < d; ++c) {
            double diff = x->at(r, c) - mean;
            var += diff * diff;
        }
        var /= d;
        double is = 1.0 / std::sqrt(var + eps);
        inv_std[r] = is;
        for (int c = 0; c < d; ++c) {
            double h = (x->at(r, c) - mean) * is;
            xhat[static_cast<size_t>(r) * d + c] = h;
            out->at(r, c) = h * gamma->values[c] + beta->values[c];
        }
    }
    return finish(out, {x, gamma, beta},
                  [x, gamma, beta, t, d, xhat = std::move(xhat),
                   inv_std = std::move(inv_std)](Tensor& self) {
        if (beta->requires_grad) {
            beta->ensure_grad();
            for (int r = 0; r < t; ++r)
                for (int c = 0; c < d; ++c)
                    beta->grad[c] += self.grad[static_cast<size_t>(r) * d + c];
        }
        if (gamma->requires_grad) {
            gamma->ensure_grad();
            for (int r = 0; r < t; ++r)
                for (int c = 0; c < d; ++c)
                    gamma->grad[c] += self.grad[static_cast<size_t>(r) * d + c] *
                                      xhat[static_cast<size_t>(r) * d + c];
        }
        if (x->requires_grad) {
            x->ensure_grad();
            for (int r = 0; r < t; ++r) {
                double mean_dh = 0.0, mean_dh_xhat = 0.0;
                for (int c = 0; c < d; ++c) {
                    double dh = self.grad[static_cast<size_t>(r) * d + c] *
                                gamma->values[c];
                    mean_dh += dh;
                    mean_dh_xhat += dh * xhat[static_cast<size_t>(r) * d + c];
                }
                mean_dh /= d;
                mean_dh_xhat /= d;
                for (int c = 0; c < d; ++c) {
                    double dh = self.grad[static_cast<size_t>(r) * d + c] *
                                gamma->values[c];
                    double h = xhat[static_cast<size_t>(r) * d + c];
                    x->grad[static_cast<size_t>(r) * d + c] +=
                        inv_std[r] * (dh - mean_dh - h * mean_dh_xhat);
                }
            }
        }
    }, "layernorm");
}

TensorPtr concat_cols(const TensorPtr& a, const TensorPtr& b) {
    int t = a->rows(), da = a->cols(), db = b->cols();
    if (b->rows() != t)
        raise(Errc::config, "concat_cols row mismatch");
    auto out = make_tensor({t, da + db});
    for (int r = 0; r < t; ++r) {
        for (int c = 0; c < da; ++c)
            out->at(r, c) = a->at(r, c);
        for (int c = 0; c < db; ++c)
            out->at(r, da + c) = b->at(r, c);
    }
    return finish(out, {a, b}, [a, b, t, da, db](Tensor& self) {
        if (a->requires_grad) {
            a->ensure_grad();
            for (int r = 0; r < t; ++r)
                for (int c = 0; c < da; ++c)
                    a->grad[static_cast<size_t>(r) * da + c] +=
                        self.grad[static_cast<size_t>(r) * (da + db) + c];
        }
        if (b->requires_grad) {
            b->ensure_grad();
            for (int r = 0; r < t; ++r)
                for (int c = 0; c < db; ++c)
                    b->grad[static_cast<size_t>(r) * db + c] +=
                        self.grad[static_cast<size_t>(r) * (da + db) + da + c];
        }
    }, "concat_cols");
}

TensorPtr embedding(const TensorPtr& table, const std::vector<int32_t>& ids) {
    int k = table->rows(), d = table->cols();
    int t = static_cast<int>(ids.size());
    if (t == 0)
        raise(Errc::data, "embedding lookup on an empty sequence");
    for (int32_t id : ids) {
        if (id < 0 || id >= k)
            raise(Errc::data, "embedding id out of range");
    }
    auto out = make_tensor({t, d});
    for (int r = 0; r < t; ++r)
        std::copy_n(table->values.data() + static_cast<size_t>(ids[r]) * d, d,
                    out->values.data() + static_cast<size_t>(r) * d);
    return finish(out, {table}, [table, ids, t, d](Tensor& self) {
        if (!table->requires_grad)
            return;
        table->ensure_grad();
        for (int r = 0; r < t; ++r) {
            double* dst = table->grad.data() + static_cast<size_t>(ids[r]) * d;
            const double* src = self.grad.data() + static_cast<size_t>(r) * d;
            for (int c = 0; c < d; ++c)
                dst[c] += src[c];
        }
    }, "embedding");
}

TensorPtr causal_depthwise_conv(const TensorPtr& x, const TensorPtr& w,
                                const TensorPtr& bias) {
    int t = x->rows(), d = x->cols();
    if (w->rows() != d)
        raise(Errc::config, "depthwise kernel rows must match channels");
    int k = w->cols();
    if (k < 1)
        raise(Errc::config, "depthwise kernel must have width >= 1");
    if (static_cast<int>(bias->count()) != d)
        raise(Errc::config, "depthwise bias length must match channels");
    auto out = make_tensor(x->shape);
    for (int r = 0; r < t; ++r) {
        for (int c = 0; c < d; ++c) {
            double acc = bias->values[c];
            for (int i = 0; i < k; ++i) {
                int src = r - (k - 1) + i;
                if (src >= 0)
                    acc += w->at(c, i) * x->at(src, c);
            }
            out->at(r, c) = acc;
        }
    }
    return finish(out, {x, w, bias}, [x, w, bias, t, d, k](Tensor& self) {
        if (bias->requires_grad) {
            bias->ensure_grad();
            for (int r = 0; r < t; ++r)
                for (int c = 0; c < d; ++c)
                    bias->grad[c] += self.grad[static_cast<size_t>(r) * d + c];
        }
        if (w->requires_grad) {
            w->ensure_grad();
            for (int r = 0; r < t; ++r) {
                for (int c = 0; c < d; ++c) {
                    double g = self.grad[static_cast<size_t>(r) * d + c];
                    for (int i = 0; i < k; ++i) {
                        int src = r - (k - 1) + i;
                        if (src >= 0)
                            w->grad[static_cast<size_t>(c) * k + i] += g * x->at(src, c);
                    }
                }
            }
        }
        if (x->requires_grad) {
            x->ensure_grad();
            for (int r = 0; r < t; ++r) {
                for (int c = 0; c < d; ++c) {
                    double g = self.grad[static_cast<size_t>(r) * d + c];
                    for (int i = 0; i < k; ++i) {
                        int src = r - (k - 1) + i;
                        if (src >= 0)
                            x->grad[static_cast<size_t>(src) * d + c] += g * w->at(c, i);
                    }
                }
            }
        }
    }, "causal_depthwise_conv");
}

TensorPtr banded_attention(const TensorPtr& q, const TensorPtr& k, const TensorPtr& v,
                           int heads, ContextWindow window) {
    int t = q->rows(), d = q->cols();
    if (k->rows() != t || v->rows() != t || k->cols() != d || v->cols() != d)
        raise(Errc::config, "attention inputs must share shape");
    if (heads < 1 || d % heads != 0)
        raise(Errc::config, "model width must be divisible by head count");
    if (window.past_frames < 0 || window.future_frames < 0)
        raise(Errc::config, "context window must be non-negative");
    int dh = d / heads;
    double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
    int band = window.past_frames + window.future_frames + 1;

    auto out = make_tensor({t, d});
    // probs[(h*t + r)*band + (s - lo_r)] = attention weight of query r on key s
    std::vector<double> probs(static_cast<size_t>(heads) * t * band, 0.0);
    for (int h = 0; h < heads; ++h) {
        int off = h * dh;
        for (int r = 0; r < t; ++r) {
            int lo = std::max(0, r - window.past_frames);
            int hi = std::min(t - 1, r + window.future_frames);
            double* p = probs.data() + (static_cast<size_t>(h) * t + r) * band;
            double best = kNegInf;
            for (int s = lo; s <= hi; ++s) {
                double dot = 0.0;
                for (int c = 0; c < dh; ++c)
                    dot += q->at(r, off + c) * k->at(s, off + c);
                p[s - lo] = dot * inv_scale;
                best = std::max(best, p[s - lo]);
            }
            double z = 0.0;
            for (int s = lo; s <= hi; ++s) {
                p[s - lo] = std::exp(p[s - lo] - best);
                z += p[s - lo];
            }
            for (int s = lo; s <= hi; ++s)
                p[s - lo] /= z;
            for (int c = 0; c < dh; ++c) {
                double acc = 0.0;
                for (int s = lo; s <= hi; ++s)
                    acc += p[s - lo] * v->at(s, off + c);
                out->at(r, off + c) = acc;
            }
        }
    }
    return finish(out, {q, k, v},
                  [q, k, v, heads, window, t, dh, band, inv_scale,
                   probs = std::move(probs)](Tensor& self) {
        q->ensure_grad();
        k->ensure_grad();
        v->ensure_grad();
        int d = dh * heads;
        std::vector<double> dp(band);
        for (int h = 0; h < heads; ++h) {
            int off = h * dh;
            for (int r = 0; r < t; ++r) {
                int lo = std::max(0, r - window.past_frames);
                int hi = std::min(t - 1, r + window.future_frames);
                const double* p = probs.data() + (static_cast<size_t>(h) * t + r) * band;
                const double* dout = self.grad.data() + static_cast<size_t>(r) * d + off;
                // dV and d(probs)
                double dot_p_dp = 0.0;
                for (int s = lo; s <= hi; ++s) {
                    double acc = 0.0;
                    for (int c = 0; c < dh; ++c) {
                        acc += dout[c] * v->at(s, off + c);
                        v->grad[static_cast<size_t>(s) * d + off + c] +=
                            p[s - lo] * dout[c];
                    }
                    dp[s - lo] = acc;
                    dot_p_dp += p[s - lo] * acc;
                }
                // softmax backward, then into q and k
                for (int s = lo; s <= hi; ++s) {
                    double dscore = p[s - lo] * (dp[s - lo] - dot_p_dp) * inv_scale;
                    for (int c = 0; c < dh; ++c) {
                        q->grad[static_cast<size_t>(r) * d + off + c] +=
                            dscore * k->at(s, off + c);
                        k->grad[static_cast<size_t>(s) * d + off + c] +=
                            dscore * q->at(r, off + c);
                    }
                }
            }
        }
    }, "banded_attention");
}

namespace {

// Row-wise log-softmax of logits, shared by both losses.
std::vector<double> log_softmax_rows(const Tensor& logits) {
    int t = logits.rows(), c = logits.cols();
    std::vector<double> lsm(static_cast<size_t>(t) * c);
    for (int r = 0; r < t; ++r) {
        const double* row = logits.values.data() + static_cast<size_t>(r) * c;
        double best = kNegInf;
        for (int j = 0; j < c; ++j)
            best = std::max(best, row[j]);
        double z = 0.0;
        for (int j = 0; j < c; ++j)
            z += std::exp(row[j] - best);
        double logz = best + std::log(z);
        for (int j = 0; j < c; ++j)
            lsm[static_cast<size_t>(r) * c + j] = row[j] - logz;
    }
    return lsm;
}

} // namespace

TensorPtr ce_loss(const TensorPtr& logits, const std::vector<int32_t>& frame_targets) {
    int t = logits->rows(), c = logits->cols();
    if (static_cast<int>(frame_targets.size()) != t)
        raise(Errc::data, "cross-entropy target length does not match frames");
    for (int32_t y : frame_targets) {
        if (y < 0 || y >= c)
            raise(Errc::data, "cross-entropy target class out of range");
    }
    std::vector<double> lsm = log_softmax_rows(*logits);
    auto out = make_tensor({1});
    double acc = 0.0;
    for (int r = 0; r < t; ++r)
        acc -= lsm[static_cast<size_t>(r) * c + frame_targets[r]];
    out->values[0] = acc / t;
    return finish(out, {logits},
                  [logits, frame_targets, t, c, lsm = std::move(lsm)](Tensor& self) {
        if (!logits->requires_grad)
            return;
        logits->ensure_grad();
        double g = self.grad[0] / t;
        for (int r = 0; r < t; ++r) {
            double* dst = logits->grad.data() + static_cast<size_t>(r) * c;
            const double* l = lsm.data() + static_cast<size_t>(r) * c;
            for (int j = 0; j < c; ++j)
                dst[j] += g * std::exp(l[j]);
            dst[frame_targets[r]] -= g;
        }
    }, "ce_loss");
}

TensorPtr ctc_loss(const TensorPtr& logits, const std::vector<int32_t>& target,
                   int blank_id) {
    int t = logits->rows(), c = logits->cols();
    if (blank_id < 0 || blank_id >= c)
        raise(Errc::config, "CTC blank id out of class range");
    int l = static_cast<int>(target.size());
    if (l == 0)
        raise(Errc::data, "CTC target must be non-empty");
    int repeats = 0;
    for (int i = 0; i < l; ++i) {
        if (target[i] < 0 || target[i] >= c || target[i] == blank_id)
            raise(Errc::data, "CTC target label out of range");
        if (i > 0 && target[i] == target[i - 1])
            ++repeats;
    }
    if (t < l + repeats)
        raise(Errc::data, "CTC target infeasible: sequence shorter than label needs");

    int s = 2 * l + 1; // blank-interleaved label length
    std::vector<int32_t> ext(s);
    for (int i = 0; i < s; ++i)
        ext[i] = (i % 2 == 0) ? blank_id : target[i / 2];
    auto lab = [ext](int i) { return ext[i]; };
    auto skip_ok = [&](int i) {
        return i >= 2 && lab(i) != blank_id && lab(i) != lab(i - 2);
    };

    std::vector<double> lsm = log_softmax_rows(*logits);
    auto lp = [&](int frame, int cls) {
        return lsm[static_cast<size_t>(frame) * c + cls];
    };

    // alpha/beta both include the emission at their own frame.
    std::vector<double> alpha(static_cast<size_t>(t) * s, kNegInf);
    alpha[0] = lp(0, lab(0));
    if (s > 1)
        alpha[1] = lp(0, lab(1));
    for (int f = 1; f < t; ++f) {
        for (int i = 0; i < s; ++i) {
            double a = alpha[static_cast<size_t>(f - 1) * s + i];
            if (i >= 1)
                a = logsumexp2(a, alpha[static_cast<size_t>(f - 1) * s + i - 1]);
            if (skip_ok(i))
                a = logsumexp2(a, alpha[static_cast<size_t>(f - 1) * s + i - 2]);
            alpha[static_cast<size_t>(f) * s + i] =
                a == kNegInf ? kNegInf : a + lp(f, lab(i));
        }
    }
    double log_p = alpha[static_cast<size_t>(t - 1) * s + s - 1];
    if (s > 1)
        log_p = logsumexp2(log_p, alpha[static_cast<size_t>(t - 1) * s + s - 2]);
    if (!std::isfinite(log_p))
        raise(Errc::numeric, "CTC total probability underflowed to zero");

    std::vector<double> beta(static_cast<size_t>(t) * s, kNegInf);
    beta[static_cast<size_t>(t - 1) * s + s - 1] = lp(t - 1, lab(s - 1));
    if (s > 1)
        beta[static_cast<size_t>(t - 1) * s + s - 2] = lp(t - 1, lab(s - 2));
    for (int f = t - 2; f >= 0; --f) {
        for (int i = 0; i < s; ++i) {
            double b = beta[static_cast<size_t>(f + 1) * s + i];
            if (i + 1 < s)
                b = logsumexp2(b, beta[static_cast<size_t>(f + 1) * s + i + 1]);
            if (i + 2 < s && skip_ok(i + 2))
                b = logsumexp2(b, beta[static_cast<size_t>(f + 1) * s + i + 2]);
            beta[static_cast<size_t>(f) * s + i] =
                b == kNegInf ? kNegInf : b + lp(f, lab(i));
        }
    }

    auto out = make_tensor({1});
    out->values[0] = -log_p;
    return finish(out, {logits},
                  [logits, t, c, s, lab, log_p, lsm = std::move(lsm),
                   alpha = std::move(alpha), beta = std::move(beta)](Tensor& self) {
        if (!logits->requires_grad)
            return;
        logits->ensure_grad();
        double g = self.grad[0];
        // d(-log p)/d logit[f,j] = softmax[f,j] - exp(S_j(f) - lp(f,j) - log p)
        // where S_j(f) = logsumexp over states i with lab(i)=j of alpha+beta
        // (the emission at f is counted twice in alpha*beta, divide once out).
        std::vector<double> state_mass(c);
        for (int f = 0; f < t; ++f) {
            std::fill(state_mass.begin(), state_mass.end(), kNegInf);
            for (int i = 0; i < s; ++i) {
                double ab = alpha[static_cast<size_t>(f) * s + i] +
                            beta[static_cast<size_t>(f) * s + i];
                if (ab != kNegInf)
                    state_mass[lab(i)] = logsumexp2(state_mass[lab(i)], ab);
            }
            double* dst = logits->grad.data() + static_cast<size_t>(f) * c;
            const double* l = lsm.data() + static_cast<size_t>(f) * c;
            for (int j = 0; j < c; ++j) {
                double soft = std::exp(l[j]);
                double occ = state_mass[j] == kNegInf
                                 ? 0.0
                                 : std::exp(state_mass[j] - l[j] - log_p);
                dst[j] += g * (soft - occ);
            }
        }
    }, "ctc_loss");
}

TensorPtr ParameterSet::insert(const std::string& name, TensorPtr t) {
    if (index_.count(name))
        raise(Errc::config, "duplicate parameter name: " + name);
    index_[name] = entries_.size();
    entries_.emplace_back(name, t);
    return t;
}

TensorPtr ParameterSet::add_weight(const std::string& name, std::vector<int> shape,
                                   int fan_in) {
    if (fan_in < 1)
        raise(Errc::config, "fan_in must be >= 1");
    auto t = make_tensor(std::move(shape), true);
    Rng rng(derive_seed(seed_, /*stream=*/4, init_counter_++));
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : t->values)
        v = rng.uniform(-bound, bound);
    return insert(name, t);
}

TensorPtr ParameterSet::add_zeros(const std::string& name, std::vector<int> shape) {
    ++init_counter_; // keep sibling weight draws stable regardless of bias style
    return insert(name, make_tensor(std::move(shape), true));
}

TensorPtr ParameterSet::add_ones(const std::string& name, std::vector<int> shape) {
    ++init_counter_;
    auto t = make_tensor(std::move(shape), true);
    std::fill(t->values.begin(), t->values.end(), 1.0);
    return insert(name, t);
}

TensorPtr ParameterSet::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end())
        raise(Errc::config, "unknown parameter: " + name);
    return entries_[it->second].second;
}

bool ParameterSet::has(const std::string& name) const { return index_.count(name) > 0; }

size_t ParameterSet::total_count() const {
    size_t n = 0;
    for (const auto& [name, t] : entries_)
        n += t->count();
    return n;
}

void ParameterSet::zero_grad() {
    for (const auto& [name, t] : entries_) {
        t->grad.assign(t->count(), 0.0);
        t->backward_done = false;
    }
}

TensorPtr convnext_block(const TensorPtr& x, const ParameterSet& params,
                         const std::string& prefix, int kernel) {
    (void)kernel; // kernel width is baked into the dw_w shape
    auto h = causal_depthwise_conv(x, params.get(prefix + ".dw_w"),
                                   params.get(prefix + ".dw_b"));
    h = layernorm(h, params.get(prefix + ".ln_g"), params.get(prefix + ".ln_b"));
    h = add_rowvec(matmul(h, params.get(prefix + ".p1_w")), params.get(prefix + ".p1_b"));
    h = gelu(h);
    h = add_rowvec(matmul(h, params.get(prefix + ".p2_w")), params.get(prefix + ".p2_b"));
    return add(x, h);
}

TensorPtr windowed_attention(const TensorPtr& x, const ParameterSet& params,
                             const std::string& prefix, int heads,
                             ContextWindow window) {
    auto n1 = layernorm(x, params.get(prefix + ".ln1_g"), params.get(prefix + ".ln1_b"));
    auto q = add_rowvec(matmul(n1, params.get(prefix + ".wq")), params.get(prefix + ".bq"));
    auto k = add_rowvec(matmul(n1, params.get(prefix + ".wk")), params.get(prefix + ".bk"));
    auto v = add_rowvec(matmul(n1, params.get(prefix + ".wv")), params.get(prefix + ".bv"));
    auto att = banded_attention(q, k, v, heads, window);
    att = add_rowvec(matmul(att, params.get(prefix + ".wo")), params.get(prefix + ".bo"));
    auto h = add(x, att);

    auto n2 = layernorm(h, params.get(prefix + ".ln2_g"), params.get(prefix + ".ln2_b"));
    auto m = add_rowvec(matmul(n2, params.get(prefix + ".w1")), params.get(prefix + ".b1"));
    m = gelu(m);
    m = add_rowvec(matmul(m, params.get(prefix + ".w2")), params.get(prefix + ".b2"));
    return add(h, m);
}

TensorPtr gated_skip(const TensorPtr& deep, const TensorPtr& skip,
                     const ParameterSet& params, const std::string& prefix) {
    if (deep->shape != skip->shape)
        raise(Errc::config, "gated skip inputs must share shape");
    auto g = sigmoid(add_rowvec(matmul(concat_cols(deep, skip), params.get(prefix + ".w")),
                                params.get(prefix + ".b")));
    auto ones = make_tensor(g->shape);
    std::fill(ones->values.begin(), ones->values.end(), 1.0);
    auto inv = add(ones, scale(g, -1.0));
    return add(mul(g, deep), mul(inv, skip));
}

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian");

void write_checkpoint(const std::string& path, const ParameterSet& params,
                      const std::vector<std::pair<std::string, std::string>>& config) {
    std::ofstream f(path, std::ios::binary);
    if (!f)
        raise(Errc::data, "cannot open checkpoint for writing: " + path);
    f << "PHN-CKPT v1\n";
    f << "config " << config.size() << '\n';
    for (const auto& [k, v] : config)
        f << k << '=' << v << '\n';
    f << "params " << params.entries().size() << '\n';
    for (const auto& [name, t] : params.entries()) {
        f << name;
        f << ' ' << t->shape.size();
        for (int d : t->shape)
            f << ' ' << d;
        f << '\n';
        std::vector<float> buf(t->count());
        for (size_t i = 0; i < buf.size(); ++i)
            buf[i] = static_cast<float>(t->values[i]);
        f.write(reinterpret_cast<const char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * sizeof(float)));
        f << '\n';
    }
    if (!f)
        raise(Errc::data, "write failed for checkpoint: " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f)
        raise(Errc::data, "cannot open checkpoint: " + path);
    std::string line;
    if (!std::getline(f, line) || line != "PHN-CKPT v1")
        raise(Errc::data, "bad checkpoint magic in " + path);
    Checkpoint ckpt;
    size_t n_config = 0;
    {
        if (!std::getline(f, line))
            raise(Errc::data, "truncated checkpoint header in " + path);
        std::istringstream ss(line);
        std::string word;
        if (!(ss >> word >> n_config) || word != "config")
            raise(Errc::data, "bad checkpoint config header in " + path);
    }
    for (size_t i = 0; i < n_config; ++i) {
        if (!std::getline(f, line))
            raise(Errc::data, "truncated checkpoint config in " + path);
        auto eq = line.find('=');
        if (eq == std::string::npos)
            raise(Errc::data, "bad checkpoint config line in " + path);
        ckpt.config.emplace_back(line.substr(0, eq), line.substr(eq + 1));
    }
    size_t n_params = 0;
    {
        if (!std::getline(f, line))
            raise(Errc::data, "truncated checkpoint header in " + path);
        std::istringstream ss(line);
        std::string word;
        if (!(ss >> word >> n_params) || word != "params")
            raise(Errc::data, "bad checkpoint params header in " + path);
    }
    for (size_t i = 0; i < n_params; ++i) {
        if (!std::getline(f, line))
            raise(Errc::data, "truncated checkpoint blob header in " + path);
        std::istringstream ss(line);
        std::string name;
        size_t ndim = 0;
        if (!(ss >> name >> ndim))
            raise(Errc::data, "bad checkpoint blob header in " + path);
        std::vector<int> shape(ndim);
        size_t count = 1;
        for (size_t d = 0; d < ndim; ++d) {
            if (!(ss >> shape[d]) || shape[d] <= 0)
                raise(Errc::data, "bad checkpoint blob shape in " + path);
            count *= static_cast<size_t>(shape[d]);
        }
        std::vector<float> buf(count);
        f.read(reinterpret_cast<char*>(buf.data()),
               static_cast<std::streamsize>(count * sizeof(float)));
        if (f.gcount() != static_cast<std::streamsize>(count * sizeof(float)))
            raise(Errc::data, "truncated checkpoint blob in " + path);
        char nl = 0;
        f.read(&nl, 1);
        if (nl != '\n')
            raise(Errc::data, "malformed checkpoint blob terminator in " + path);
        std::vector<double> vals(count);
        for (size_t j = 0; j < count; ++j)
            vals[j] = static_cast<double>(buf[j]);
        ckpt.shapes.emplace_back(name, std::move(shape));
        ckpt.blobs.emplace(name, std::move(vals));
    }
    return ckpt;
}

void load_into(const Checkpoint& ckpt, ParameterSet& params) {
    for (const auto& [name, t] : params.entries()) {
        auto it = ckpt.blobs.find(name);
        if (it == ckpt.blobs.end())
            raise(Errc::data, "checkpoint missing parameter: " + name);
        if (it->second.size() != t->count())
            raise(Errc::data, "checkpoint parameter size mismatch: " + name);
        std::copy(it->second.begin(), it->second.end(), t->values.begin());
    }
    if (ckpt.blobs.size() != params.entries().size())
        raise(Errc::data, "checkpoint holds extra parameters for this config");
}

} // namespace phonos::nn
