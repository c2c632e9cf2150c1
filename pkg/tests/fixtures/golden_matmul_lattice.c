/* generated by cachelattice
 * kernel: matmul sizes {'n': 8}
 * tile vectors: [(8, 1, 0), (0, 2, 0), (0, 0, 3)]
 * inner order: ['i', 'j', 'k']
 * config hash: golden
 */
#include <stddef.h>

static inline long floord(long a, long b)
{
    long q = a / b;
    return (q * b != a && ((a < 0) != (b < 0))) ? q - 1 : q;
}

static inline long lmax(long a, long b) { return a > b ? a : b; }
static inline long lmin(long a, long b) { return a < b ? a : b; }

void cl_matmul(double *restrict A, const double *restrict B, const double *restrict C)
{
    for (long t1 = -1; t1 <= 3; t1++)
        for (long t2 = 0; t2 <= 2; t2++)
            for (long i = 0; i <= 7; i++)
                for (long j = lmax(0, 2*t1); j <= lmin(7, 2*t1 + 2); j++)
                    for (long k = lmax(0, 3*t2); k <= lmin(7, 3*t2 + 2); k++)
                    {
                        if (floord(6*i, 48) != 0 || floord(-3*i + 24*j, 48) != t1 || floord(16*k, 48) != t2)
                            continue;
                        A[i + 8*j] += B[i + 8*k] * C[8*j + k];
                    }
}
