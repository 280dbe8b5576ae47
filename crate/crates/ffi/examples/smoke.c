#include "ntfkit.h"
#include <assert.h>
#include <stdio.h>

int main(void) {
    double values[24];
    for (int n = 0; n < 24; n++) values[n] = 1.0 + (n % 5) * 0.5;
    NtfTensor *tensor = NULL;
    NtfStatus st = ntf_tensor_new(2, 3, 4, values, 24, &tensor);
    assert(st == NTF_STATUS_OK);
    size_t i, j, k;
    assert(ntf_tensor_dims(tensor, &i, &j, &k) == NTF_STATUS_OK);
    assert(i == 2 && j == 3 && k == 4);

    NtfModel *model = NULL;
    double rel = -1.0;
    st = ntf_fit(tensor, 2, 1, 2, 200, 1e-9, &model, &rel);
    assert(st == NTF_STATUS_OK);
    size_t rank;
    assert(ntf_model_rank(model, &rank) == NTF_STATUS_OK && rank == 2);
    double lambda[2];
    assert(ntf_model_lambda(model, lambda, 2) == NTF_STATUS_OK);
    double cc;
    assert(ntf_corcondia(tensor, model, &cc) == NTF_STATUS_OK);

    st = ntf_tensor_new(2, 3, 4, NULL, 24, &tensor);
    assert(st == NTF_STATUS_INVALID_ARGUMENT);
    printf("last error: %s\n", ntf_last_error_message());

    ntf_model_free(model);
    ntf_tensor_free(tensor);
    printf("rel=%g cc=%g lambda0=%g\n", rel, cc, lambda[0]);
    return 0;
}
