#include "almreg.h"
int main(){ return almreg_catalog_count() > 0 ? 0 : 1; }
