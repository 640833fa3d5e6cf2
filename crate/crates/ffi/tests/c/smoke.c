#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "tradenet.h"

static char *slurp(const char *path) {
    FILE *f = fopen(path, "rb");
    if (!f) return NULL;
    fseek(f, 0, SEEK_END);
    long n = ftell(f);
    rewind(f);
    char *buf = malloc((size_t)n + 1);
    if (fread(buf, 1, (size_t)n, f) != (size_t)n) { fclose(f); free(buf); return NULL; }
    buf[n] = '\0';
    fclose(f);
    return buf;
}

int main(int argc, char **argv) {
    if (argc < 2) return 10;
    char *json = slurp(argv[1]);
    if (!json) return 11;
    TnMarket *m = NULL;
    if (tn_market_from_json(json, &m) != TN_STATUS_OK) return 12;
    free(json);

    size_t agents = 0, trades = 0;
    tn_market_size(m, &agents, &trades);
    char *value = NULL;
    tn_market_value(m, &value);
    printf("agents=%zu trades=%zu value=%s\n", agents, trades, value);
    tn_string_free(value);

    char *out = NULL;
    TnStatus s = tn_analyze(m, "fairness", NULL, NULL, &out);
    printf("fairness status=%d verified=%s\n", (int)s, strstr(out, "\"verified\":true") ? "yes" : "no");
    tn_string_free(out);

    s = tn_analyze(m, "nonsense", NULL, NULL, &out);
    printf("unknown status=%d error=%s\n", (int)s, tn_last_error());

    tn_market_free(m);
    return 0;
}
